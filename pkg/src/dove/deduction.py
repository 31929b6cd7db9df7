"""Analysis and synthesis closures.

``analyze`` computes the unique undecomposable set reachable by the
decomposition rules (split tuples, decrypt with a known short key, with a
shared key whose partner is known, with the owner's own public key, or with
the private key of a known agent).  The same code serves symbolic owners
(role variables, where "B is known" means the variable B is present) and
concrete owners.

The intruder additionally knows every agent name, so ``intruder_close``
analyses with ``agents_known=True``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .term import (
    INTRUDER, Agent, AgentVar, Constant, Enc, KeyVar, PrivKey, PubKey,
    SharedKey, ShortKey, Term, Tup, elements, is_key,
)

__all__ = [
    "KnowledgeSet", "analyze", "can_synthesize", "steps_to_learn",
    "explain", "intruder_close", "intruder_can_derive", "derivable_from",
    "EMPTY_INTRUDER",
]


@dataclass(frozen=True)
class KnowledgeSet:
    """An undecomposable knowledge set split into basic and crypto parts.

    ``opened`` records cyphers the owner has decrypted while reaching the
    fixpoint.  Decryption removes a cypher from the set, but the intruder
    still holds its bits and may replay it, so the search consults this field
    for replay.  It is not part of the knowledge proper.
    """

    owner: Term
    basic: frozenset = frozenset()
    crypto: frozenset = frozenset()
    opened: frozenset = field(default=frozenset(), compare=True)

    @property
    def terms(self) -> frozenset:
        return self.basic | self.crypto

    def __contains__(self, t: Term) -> bool:
        return t in self.basic or t in self.crypto

    def __len__(self) -> int:
        return len(self.basic) + len(self.crypto)


EMPTY_INTRUDER = KnowledgeSet(INTRUDER)


def _knows_agent(x: Term, known, agents_known: bool) -> bool:
    if agents_known and isinstance(x, (Agent, AgentVar)):
        return True
    return x in known


def can_decrypt(owner: Term, key: Term, known, agents_known: bool = False) -> bool:
    if isinstance(key, Constant):
        return True      # constants are public
    if isinstance(key, (KeyVar, ShortKey)):
        return key in known
    if isinstance(key, SharedKey):
        partner = key.other(owner)
        return partner is not None and _knows_agent(partner, known, agents_known)
    if isinstance(key, PubKey):
        return key.agent == owner
    if isinstance(key, PrivKey):
        return _knows_agent(key.agent, known, agents_known)
    return False


def analyze(owner: Term, terms: Iterable[Term], *, agents_known: bool = False) -> KnowledgeSet:
    basic: set[Term] = set()
    crypto: set[Enc] = set()
    opened: set[Enc] = set()
    stack = list(terms)
    while True:
        while stack:
            t = stack.pop()
            if isinstance(t, Tup):
                stack.extend(t.items)
            elif isinstance(t, Enc):
                if t in opened or t in crypto:
                    continue
                if can_decrypt(owner, t.key, basic, agents_known):
                    opened.add(t)
                    stack.append(t.body)
                else:
                    crypto.add(t)
            else:
                basic.add(t)
        ready = [c for c in crypto if can_decrypt(owner, c.key, basic, agents_known)]
        if not ready:
            break
        for c in ready:
            crypto.discard(c)
            opened.add(c)
            stack.append(c.body)
    return KnowledgeSet(owner, frozenset(basic), frozenset(crypto), frozenset(opened))


def _members(kn) -> frozenset:
    if isinstance(kn, KnowledgeSet):
        return kn.terms
    return frozenset(kn)


def can_synthesize(owner: Term, kn, target: Term) -> bool:
    """Membership of ``target`` in the honest synthesis closure of ``kn``."""
    members = _members(kn)

    def key_ok(k: Term) -> bool:
        if isinstance(k, Constant):
            return True
        if isinstance(k, SharedKey):
            return k.other(owner) is not None
        if isinstance(k, PrivKey):
            return k.agent == owner
        if isinstance(k, PubKey):
            return True
        return k in members

    def synth(t: Term) -> bool:
        if t in members or isinstance(t, Constant):
            return True
        if isinstance(t, Tup):
            return segments(t.items)
        if isinstance(t, Enc):
            return key_ok(t.key) and synth(t.body)
        return False

    def segments(items) -> bool:
        # pairing is associative, so a known tuple may supply any run of
        # consecutive elements
        n = len(items)
        ok = [True] + [False] * n
        for j in range(1, n + 1):
            for i in range(j):
                if not ok[i]:
                    continue
                if (j - i == 1 and synth(items[i])) or (j - i > 1 and Tup(items[i:j]) in members):
                    ok[j] = True
                    break
        return ok[n]

    return synth(target)


def missing_component(owner: Term, kn, target: Term) -> Term | None:
    """Smallest subterm of ``target`` blocking synthesis, or None."""
    if can_synthesize(owner, kn, target):
        return None
    if isinstance(target, Tup):
        for x in target.items:
            m = missing_component(owner, kn, x)
            if m is not None:
                return m
    if isinstance(target, Enc):
        m = missing_component(owner, kn, target.body)
        if m is not None:
            return m
        return target.key
    return target


# ---------------------------------------------------------------------------
# steps to learn

def _learning_costs(owner: Term, terms: Iterable[Term], agents_known: bool):
    cost: dict[Term, int] = {}
    parent: dict[Term, tuple[Enc, Term | None]] = {}
    for t in terms:
        for x in elements(t):
            cost[x] = 0

    def requirement(k: Term):
        """(extra steps, dependency) needed to use key ``k``; None if unusable."""
        if isinstance(k, Constant):
            return (0, None)
        if isinstance(k, (KeyVar, ShortKey)):
            return (cost[k], k) if k in cost else None
        if isinstance(k, PubKey):
            return (0, None) if k.agent == owner else None
        if isinstance(k, SharedKey):
            partner = k.other(owner)
            if partner is None:
                return None
            k = partner
        elif isinstance(k, PrivKey):
            k = k.agent
        if agents_known and isinstance(k, (Agent, AgentVar)):
            return (0, None)
        return (cost[k], k) if k in cost else None

    changed = True
    while changed:
        changed = False
        for e in [t for t in cost if isinstance(t, Enc)]:
            req = requirement(e.key)
            if req is None:
                continue
            total = cost[e] + req[0] + 1
            for x in elements(e.body):
                if x not in cost or total < cost[x]:
                    cost[x] = total
                    parent[x] = (e, req[1])
                    changed = True
    return cost, parent


def steps_to_learn(owner: Term, terms: Iterable[Term], target: Term,
                   *, agents_known: bool = False) -> int | None:
    cost, _ = _learning_costs(owner, list(terms), agents_known)
    return cost.get(target)


def explain(owner: Term, terms: Iterable[Term], target: Term,
            *, agents_known: bool = False) -> list[tuple[Enc, Term]] | None:
    """Decryptions (cypher, key) used to learn ``target``, in dependency order."""
    cost, parent = _learning_costs(owner, list(terms), agents_known)
    if target not in cost:
        return None
    steps: list[tuple[Enc, Term]] = []
    seen: set[Term] = set()

    def visit(x: Term) -> None:
        if x in seen or x not in parent:
            return
        seen.add(x)
        enc, dep = parent[x]
        visit(enc)
        if dep is not None:
            visit(dep)
        if (enc, enc.key) not in steps:
            steps.append((enc, enc.key))

    visit(target)
    return steps


# ---------------------------------------------------------------------------
# intruder

def intruder_close(intr: KnowledgeSet, new: Iterable[Term]) -> KnowledgeSet:
    new = list(new)
    if not new:
        return intr
    out = analyze(INTRUDER, list(intr.terms) + new, agents_known=True)
    if intr.opened:
        out = KnowledgeSet(INTRUDER, out.basic, out.crypto, out.opened | intr.opened)
    return out


def intruder_can_derive(intr: KnowledgeSet, target: Term, depth: int | None = None) -> bool:
    """Membership in the intruder's synthesis closure.

    Atoms are derivable when stored, or when public by construction: agent
    names, public keys, constants, the intruder's own private key and every
    key it shares.  A cypher is derivable when stored (or seen, for replay)
    or when its body and key are derivable.  ``depth`` bounds how many
    encryptions the intruder may itself perform along any path.
    """
    return derivable_from(intr.basic | intr.crypto | intr.opened, target, depth)


def derivable_from(held, t: Term, budget: int | None) -> bool:
    # module level rather than a closure: a self-referencing closure is a
    # reference cycle, and the search runs with the cycle collector off
    if t in held:
        return True
    if isinstance(t, (Agent, Constant)):
        return True
    if isinstance(t, PubKey):
        return isinstance(t.agent, Agent)
    if isinstance(t, PrivKey):
        return t.agent == INTRUDER
    if isinstance(t, SharedKey):
        return INTRUDER in (t.a, t.b)
    if isinstance(t, Tup):
        return all(derivable_from(held, x, budget) for x in t.items)
    if isinstance(t, Enc):
        if budget is not None and budget <= 0:
            return False
        if not (is_key(t.key) and derivable_from(held, t.key, None)):
            return False
        return derivable_from(held, t.body, None if budget is None else budget - 1)
    return False
