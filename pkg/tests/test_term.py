import pytest
from hypothesis import given, strategies as st

from dove.term import (
    Agent, AgentVar, Constant, Enc, KeyVar, MalformedTerm, Nonce, NonceVar,
    PrivKey, PubKey, SharedKey, ShortKey, Tup, UnboundComponent,
    apply_valuation, canonicalize, encryption_depth, evaluate, is_canonical,
    subterms, tup,
)

A, B, S = AgentVar("A"), AgentVar("B"), AgentVar("S")
Na, N = NonceVar("Na"), NonceVar("N")
Ka, Kb = KeyVar("Ka"), KeyVar("Kb")


def test_canonical_flattens_right_nesting():
    t1, t2, t3 = Agent("t1"), Agent("t2"), Agent("t3")
    assert canonicalize(Tup([t1, Tup([t2, t3])])) == Tup([t1, t2, t3])


def test_canonical_atom_unchanged():
    assert canonicalize(Na) is Na


def _left_fold(t):
    # rebuild every tuple from a left fold of binary pairs, then flatten
    if isinstance(t, Tup):
        leaves = []
        for x in t.items:
            x = _left_fold(x)
            leaves.extend(x.items if isinstance(x, Tup) else [x])
        return Tup(leaves) if len(leaves) > 1 else leaves[0]
    if isinstance(t, Enc):
        return Enc(_left_fold(t.body), t.key)
    return t


def test_canonical_nested_inside_encryption():
    a, b, c, d, e, f = (Agent(x) for x in "abcdef")
    k = ShortKey(1)
    raw = Tup([Tup([a, b]), Tup([c, Enc(Tup([d, Tup([e, f])]), k)])])
    expected = Tup([a, b, c, Enc(Tup([d, e, f]), k)])
    assert canonicalize(raw) == expected == _left_fold(raw)


def test_subterms_examples():
    assert subterms(Na) == {Na}
    m = Enc(Tup([B, Ka]), PubKey(S))
    assert subterms(m) == {m, Tup([B, Ka]), B, Ka, PubKey(S), S}
    assert subterms(Tup([A, B])) == {Tup([A, B]), A, B}


def test_encryption_depth_examples():
    assert encryption_depth(Ka) == 0
    assert encryption_depth(Enc(Ka, PubKey(S))) == 1
    sig = tup(N, A, B, S)
    m1 = Enc(tup(sig, B, Enc(tup(sig, Ka), PubKey(S))), PrivKey(A))
    assert encryption_depth(m1) == 2


def test_valuation_examples():
    b, s, k1, k2 = Agent("b"), Agent("s"), ShortKey(1), ShortKey(2)
    assert apply_valuation(B, {B: b}) == b
    v = {B: b, Ka: k1, S: s}
    assert apply_valuation(tup(B, Enc(Ka, PubKey(S))), v) == tup(b, Enc(k1, PubKey(s)))
    # TMN message 4 seen by A: the whole cypher is held as one value
    c = Enc(k2, k1)
    assert apply_valuation(tup(B, Enc(Kb, Ka)), {B: b, Enc(Kb, Ka): c}) == tup(b, c)


def test_unbound_component():
    with pytest.raises(UnboundComponent):
        apply_valuation(tup(A, Na), {A: Agent("a")})
    assert evaluate(Na, {}) is None


def test_key_position_must_be_a_key():
    with pytest.raises(MalformedTerm):
        Enc(Na, Enc(Na, Ka))
    with pytest.raises(MalformedTerm):
        PubKey(Na)


def test_shared_key_is_unordered():
    assert SharedKey(A, B) == SharedKey(B, A)
    assert SharedKey(A, B).other(A) == B
    assert SharedKey(A, B).other(S) is None


# -- properties --------------------------------------------------------------

ATOMS = st.sampled_from([A, B, S, Na, N, Ka, Kb, Constant("c"), Nonce(1), Agent("a")])
KEYS = st.sampled_from([Ka, PubKey(S), PrivKey(A), SharedKey(A, B), ShortKey(2)])

raw_terms = st.recursive(
    ATOMS,
    lambda inner: st.one_of(
        st.lists(inner, min_size=1, max_size=3).map(Tup),
        st.tuples(inner, KEYS).map(lambda bk: Enc(*bk)),
    ),
    max_leaves=10,
)


@given(raw_terms)
def test_canonicalize_idempotent(t):
    c = canonicalize(t)
    assert is_canonical(c)
    assert canonicalize(c) == c


@given(raw_terms, raw_terms, raw_terms)
def test_pairing_is_associative(x, y, z):
    assert canonicalize(Tup([Tup([x, y]), z])) == canonicalize(Tup([x, Tup([y, z])]))


@given(raw_terms)
def test_depth_recursion(t):
    c = canonicalize(t)
    if isinstance(c, Enc):
        assert encryption_depth(c) == 1 + encryption_depth(c.body)
    elif isinstance(c, Tup):
        assert encryption_depth(c) == max(encryption_depth(x) for x in c.items)
    else:
        assert encryption_depth(c) == 0


VAL = {A: Agent("a"), B: Agent("b"), S: Agent("s"), Na: Nonce(3), N: Nonce(4),
       Ka: ShortKey(5), Kb: ShortKey(6)}


@given(raw_terms)
def test_valuation_commutes_with_canonicalize(t):
    assert apply_valuation(canonicalize(t), VAL) == canonicalize(apply_valuation(t, VAL))
