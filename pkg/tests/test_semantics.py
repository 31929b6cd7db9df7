import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from dove.deduction import KnowledgeSet, intruder_close
from dove.semantics import (
    Bounds, Event, Model, NotEnabled, PartialSession, Scenario, canonical_key, enabled_receives,
    enabled_sends, initial_state, moves, replay, step,
)
from dove.term import (
    INTRUDER, Agent, Enc, Nonce, PubKey, ShortKey, apply_valuation, subterms, tup,
)

a, b, s = Agent("a"), Agent("b"), Agent("s")
k1 = ShortKey(1)


def _model(p, **kw):
    return Model(p, Bounds(**kw))


def test_initial_state(tmn):
    s0 = initial_state(tmn, Bounds(intruder_fresh=0))
    assert s0.sessions == ()
    assert s0.intruder.basic == frozenset()
    s1 = initial_state(tmn, Bounds(intruder_fresh=1))
    assert s1.intruder.basic == {Nonce(1), k1}
    assert s1.sessions == ()


def test_server_accepts_forged_first_message(tmn):
    model = _model(tmn)
    s0 = initial_state(model)
    forged = tup(b, Enc(k1, PubKey(s)))
    hits = [(e, n) for e, n in enabled_receives(s0, model)
            if e.role.name == "S" and e.sender == a and e.message == forged]
    assert len(hits) == 1
    ev, nxt = hits[0]
    A, B, S = tmn.roles
    sess = nxt.sessions[-1]
    assert sess.binding[A] == a and sess.binding[B] == b
    assert sess.value(tmn.keys[0]) == k1
    assert nxt.intruder == s0.intruder


def test_receive_must_agree_with_bindings(tmn):
    model = _model(tmn)
    A, B, S = tmn.roles
    s0 = initial_state(model)
    # the server accepts message 1 from a, then answers with message 2
    move = next(m for m in moves(s0, model)
                if m[0][0].role == S and m[0][0].sender == a and len(m) == 2)
    s2 = move[-1][1]
    slot = len(s2.sessions) - 1
    offers = [e for e, _ in enabled_receives(s2, model) if e.slot == slot]
    assert offers
    assert all(e.message.items[0] == a for e in offers)
    bad = Event("receive", s, b, s, tup(INTRUDER, Enc(k1, PubKey(s))), S, 3, slot)
    with pytest.raises(NotEnabled):
        step(s2, bad, model)


def test_no_moves_when_budget_spent(tmn):
    model = _model(tmn, max_sessions=0)
    assert moves(initial_state(model), model) == []


def test_scenario_rejects_honest_intruder(tmn):
    with pytest.raises(ValueError):
        Scenario({"A": (INTRUDER,)}, (a, INTRUDER))


# -- properties over random walks ------------------------------------------

def _walk(model, rng, length):
    state = initial_state(model)
    events = []
    for _ in range(length):
        options = moves(state, model)
        if not options:
            break
        move = rng.choice(options)
        events += [e for e, _ in move]
        state = move[-1][1]
    return state, events


walks = st.tuples(st.integers(0, 2**32 - 1), st.integers(1, 5))


@settings(max_examples=40, deadline=None)
@given(walks)
def test_intruder_knows_closure_of_sent(tmn, walk):
    seed, length = walk
    model = _model(tmn, max_events=6)
    state, events = _walk(model, random.Random(seed), length)
    sent = [e.message for e in events if e.kind == "send"]
    expected = intruder_close(KnowledgeSet(INTRUDER), model.intruder_seeds() + sent)
    assert state.intruder.terms == expected.terms


@settings(max_examples=40, deadline=None)
@given(walks)
def test_receives_leave_intruder_alone(tmn, walk):
    seed, length = walk
    model = _model(tmn, max_events=6)
    trace = replay(model, _walk(model, random.Random(seed), length)[1])
    prev = trace.initial
    for e, nxt in trace.steps:
        if e.kind == "receive":
            assert nxt.intruder == prev.intruder
        prev = nxt


@settings(max_examples=40, deadline=None)
@given(walks)
def test_replay_reproduces_state(tmn_variant, walk):
    seed, length = walk
    model = _model(tmn_variant, max_events=6)
    state, events = _walk(model, random.Random(seed), length)
    assert replay(model, events).final == state


def _permute_fresh(state, model, rng):
    ren = {}
    for kind in (Nonce, ShortKey):
        fresh = sorted(x for x in _atoms(state)
                       if isinstance(x, kind) and model.is_honest_fresh(x))
        shuffled = fresh[:]
        rng.shuffle(shuffled)
        ren.update(zip(fresh, shuffled))

    def r(t):
        return apply_valuation(t, ren)

    sessions = tuple(PartialSession(x.role, x.owner, x.length,
                                    tuple(sorted((k, r(v)) for k, v in x.valuation)))
                     for x in state.sessions)
    intr = KnowledgeSet(INTRUDER, frozenset(map(r, state.intruder.basic)),
                        frozenset(map(r, state.intruder.crypto)),
                        frozenset(map(r, state.intruder.opened)))
    return replace(state, sessions=sessions, intruder=intr)


def _atoms(state):
    out = set()
    for x in state.sessions:
        for _, v in x.valuation:
            out |= subterms(v)
    for t in state.intruder.terms | state.intruder.opened:
        out |= subterms(t)
    return out


@settings(max_examples=40, deadline=None)
@given(walks)
def test_state_keys_ignore_fresh_names(tmn, walk):
    seed, length = walk
    model = _model(tmn, max_events=6)
    rng = random.Random(seed)
    state, _ = _walk(model, rng, length)
    other = _permute_fresh(state, model, rng)
    assert canonical_key(other, model) == canonical_key(state, model)


def test_state_keys_separate_different_states(tmn):
    model = _model(tmn)
    s0 = initial_state(model)
    keys = {canonical_key(m[-1][1], model) for m in moves(s0, model)}
    assert len(keys) > 1
    assert canonical_key(s0, model) not in keys


def test_moves_are_deterministic(tmn):
    model = _model(tmn)
    s0 = initial_state(model)
    first = moves(s0, model)
    again = moves(s0, _model(tmn))
    assert [[e for e, _ in m] for m in first] == [[e for e, _ in m] for m in again]
