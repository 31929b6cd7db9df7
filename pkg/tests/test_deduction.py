import random

from hypothesis import given, settings, strategies as st

from dove.deduction import (
    KnowledgeSet, analyze, can_synthesize, explain, intruder_can_derive,
    intruder_close, steps_to_learn,
)
from dove.term import (
    INTRUDER, Agent, AgentVar, Constant, Enc, KeyVar, NonceVar, PrivKey, PubKey,
    SharedKey, ShortKey, tup,
)
from oracles import anal_normal_forms, random_term, synth_saturate

A, B, C, S = (AgentVar(x) for x in "ABCS")
n, tau, x, y = NonceVar("n"), NonceVar("tau"), NonceVar("x"), NonceVar("y")
Ka, Kb, K = KeyVar("Ka"), KeyVar("Kb"), KeyVar("K")
a, b, s = Agent("a"), Agent("b"), Agent("s")
k1, k2 = ShortKey(1), ShortKey(2)


def test_analyze_shared_key_with_known_partner():
    kn = analyze(A, [tup(B, Enc(n, SharedKey(A, B)))])
    assert kn.basic == {B, n}
    assert kn.crypto == frozenset()
    assert anal_normal_forms(A, [tup(B, Enc(n, SharedKey(A, B)))]) == {frozenset({B, n})}


def test_analyze_empty():
    assert len(analyze(A, [])) == 0


def test_analyze_tmn_step_two_for_b():
    kn = analyze(B, [tup(B, A), S, PubKey(S)])
    assert kn.basic == {A, B, S, PubKey(S)}


def test_analyze_keeps_unreadable_cyphers():
    c = Enc(Ka, PubKey(S))
    kn = analyze(A, [B, c])
    assert kn.crypto == {c}
    assert kn.opened == frozenset()


def test_synthesize_tmn_message_one():
    kn = {B, Ka, S, PubKey(S)}
    assert can_synthesize(A, kn, tup(B, Enc(Ka, PubKey(S))))


def test_cannot_sign_for_another_agent():
    assert not can_synthesize(A, {B}, Enc(B, PrivKey(C)))


def test_synthesize_needs_the_short_key():
    assert can_synthesize(A, {B, Ka}, Enc(B, Ka))
    assert not can_synthesize(A, {B, Ka}, Enc(B, Kb))


def test_synthesize_reuses_runs_of_a_known_tuple():
    assert can_synthesize(A, {tup(B, n), Ka}, tup(B, n, Ka))
    assert not can_synthesize(A, {tup(B, n), Ka}, tup(n, Ka))


def test_steps_to_learn_examples():
    assert steps_to_learn(A, [tup(x, tau, y)], tau) == 0
    assert steps_to_learn(A, [Enc(tau, PubKey(A))], tau) == 1
    assert steps_to_learn(A, [Enc(K, PubKey(A)), Enc(tau, K)], tau) == 2
    assert steps_to_learn(A, [Enc(tau, PubKey(B))], tau) is None


def test_explain_lists_decryptions_in_order():
    c1, c2 = Enc(K, PubKey(A)), Enc(tau, K)
    assert explain(A, [c1, c2], tau) == [(c1, PubKey(A)), (c2, K)]


def test_intruder_close_examples():
    m1 = tup(b, Enc(k1, PubKey(s)))
    out = intruder_close(KnowledgeSet(INTRUDER), [m1])
    assert out.basic == {b}
    assert out.crypto == {Enc(k1, PubKey(s))}
    out = intruder_close(KnowledgeSet(INTRUDER, frozenset({k1})), [Enc(k2, k1)])
    assert out.basic == {k1, k2}
    kn = KnowledgeSet(INTRUDER, frozenset({k1}))
    assert intruder_close(kn, []) == kn


def test_intruder_can_derive_examples():
    kn = intruder_close(KnowledgeSet(INTRUDER), [k1])
    assert intruder_can_derive(kn, tup(b, Enc(k1, PubKey(s))))
    assert not intruder_can_derive(KnowledgeSet(INTRUDER), PrivKey(a))
    assert intruder_can_derive(KnowledgeSet(INTRUDER), Enc(a, SharedKey(a, INTRUDER)))


def test_intruder_encryption_depth_bound():
    kn = intruder_close(KnowledgeSet(INTRUDER), [k1])
    nested = Enc(Enc(k1, PubKey(s)), PubKey(s))
    assert intruder_can_derive(kn, nested, 2)
    assert not intruder_can_derive(kn, nested, 1)


# -- properties --------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _terms(seed):
    rng = random.Random(seed)
    return [random_term(rng, 3) for _ in range(rng.randint(1, 5))]


@given(seeds)
def test_analyze_is_confluent(seed):
    terms = _terms(seed)
    assert anal_normal_forms(A, terms) == {analyze(A, terms).terms}


@given(seeds, seeds)
def test_analyze_is_monotone(s1, s2):
    t1 = _terms(s1)
    t2 = t1 + _terms(s2)
    k1_, k2_ = analyze(A, t1), analyze(A, t2)
    # everything learnt from the smaller set is still learnt or still present
    for t in k1_.basic:
        assert t in k2_.basic
    assert analyze(A, k2_.terms).terms == k2_.terms


@given(seeds)
def test_steps_to_learn_matches_analysis(seed):
    terms = _terms(seed)
    kn = analyze(A, terms)
    for t in kn.basic:
        assert steps_to_learn(A, terms, t) is not None


@settings(max_examples=60)
@given(seeds)
def test_synthesis_matches_saturation(seed):
    rng = random.Random(seed)
    terms = _terms(seed)
    for _ in range(4):
        target = random_term(rng, 3)
        assert can_synthesize(A, terms, target) == synth_saturate(A, terms, target)


@given(seeds)
def test_known_terms_are_synthesizable(seed):
    terms = _terms(seed)
    kn = analyze(A, terms)
    for t in kn.terms:
        assert can_synthesize(A, kn, t)
    # constants stay public
    assert can_synthesize(A, kn, Constant("c"))
