import random

import pytest
from hypothesis import given, strategies as st

from dove.protocol import ProtocolError, UndeclaredVariable
from dove.syntax import ParseError, parse_spec, parse_term, render_spec
from dove.term import AgentVar, Enc, KeyVar, PubKey, tup
from oracles import random_protocol

HEAD = "protocol P\nroles A B\nnonces N\nkeys Ka\n"


def test_tmn_file(tmn):
    assert tmn.name == "TMN"
    assert [r.name for r in tmn.roles] == ["A", "B", "S"]
    assert len(tmn.messages) == 4
    A, B, S = tmn.roles
    assert tmn.messages[0].content == tup(B, Enc(KeyVar("Ka"), PubKey(S)))
    assert tmn.secrets == ((KeyVar("Kb"), B),)


def test_sender_must_differ_from_receiver():
    with pytest.raises(ProtocolError):
        parse_spec(HEAD + "1. A -> A : N\n")


def test_undeclared_key():
    with pytest.raises(UndeclaredVariable):
        parse_spec(HEAD + "1. A -> B : {N}Kc\n")


def test_error_positions():
    with pytest.raises(ParseError) as err:
        parse_spec(HEAD + "1. A -> B : {N}\n")
    assert err.value.line == 5


def test_message_numbers_must_run_in_order():
    with pytest.raises(ParseError):
        parse_spec(HEAD + "2. A -> B : N\n")


def test_parse_term_scope():
    A = AgentVar("A")
    assert parse_term("A, {A}pk(A)", {"A": A}) == tup(A, Enc(A, PubKey(A)))
    with pytest.raises(UndeclaredVariable):
        parse_term("Z")


def test_corpus_round_trips(corpus):
    for path in sorted(corpus.glob("*.proto")):
        p = parse_spec(path.read_text())
        assert parse_spec(render_spec(p)) == p


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_render_round_trip(seed):
    p = random_protocol(random.Random(seed))
    assert parse_spec(render_spec(p)) == p
