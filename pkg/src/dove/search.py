"""Bounded breadth-first search for secrecy violations and authenticity checks."""
from __future__ import annotations

import gc
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field

from .deduction import explain
from .protocol import ProtocolTemplate, revealed_vars
from .semantics import (
    Bounds, Event, Model, PartialSession, Scenario, State, Trace,
    canonical_key, initial_state, moves, narration_lines, render_trace, replay,
    successors,
)
from .term import INTRUDER, AgentVar, Enc, Term, Tup, Var

__all__ = [
    "Bounds", "Target", "AttackReport", "SearchResult", "AuthViolation",
    "AuthResult", "default_targets", "evaluable", "secrecy_violated",
    "find_secrecy_attack", "check_authenticity", "authcheck", "explore",
]


@dataclass(frozen=True, order=True)
class Target:
    var: Var
    viewpoint: AgentVar

    def __str__(self):
        return f"{self.var} from {self.viewpoint}"


@dataclass
class AttackReport:
    target: Target
    trace: Trace
    session: PartialSession
    value: Term
    derivation: list[tuple[Enc, Term]]

    def lines(self) -> list[str]:
        out = [f"secret {self.target.var} broken from the point of view of "
               f"{self.target.viewpoint} (value {self.value})",
               f"session: {self.session}", "events:"]
        out += ["  " + s for s in render_trace(self.trace)]
        out.append("narration:")
        out += ["  " + s for s in narration_lines(self.trace.events)]
        out.append("intruder derivation:")
        if not self.derivation:
            out.append(f"  {self.value} is sent in clear")
        for c, k in self.derivation:
            out.append(f"  decrypt {c} with {k}")
        return out

    def to_json(self) -> dict:
        return {
            "secret": str(self.target.var),
            "viewpoint": str(self.target.viewpoint),
            "value": str(self.value),
            "session": {"role": str(self.session.role), "owner": str(self.session.owner),
                        "length": self.session.length,
                        "valuation": {str(k): str(v) for k, v in self.session.valuation}},
            "events": [_event_json(e) for e in self.trace.events],
            "narration": narration_lines(self.trace.events),
            "derivation": [{"cypher": str(c), "key": str(k)} for c, k in self.derivation],
        }


def _event_json(e: Event) -> dict:
    return {"kind": e.kind, "actor": str(e.actor), "sender": str(e.sender),
            "receiver": str(e.receiver), "message": str(e.message),
            "role": str(e.role), "index": e.index}


@dataclass
class SearchResult:
    attack: AttackReport | None
    explored: int
    exhausted: bool
    targets: list[Target]
    not_evaluable: list[Target]
    bounds: Bounds
    elapsed: float = 0.0

    @property
    def found(self) -> bool:
        return self.attack is not None

    def to_json(self) -> dict:
        return {
            "attack": None if self.attack is None else self.attack.to_json(),
            "explored": self.explored,
            "exhausted": self.exhausted,
            "targets": [str(t) for t in self.targets],
            "not_evaluable": [str(t) for t in self.not_evaluable],
            "bounds": {"max_sessions": self.bounds.max_sessions,
                       "max_events": self.bounds.max_events,
                       "synth_depth": self.bounds.synth_depth,
                       "intruder_fresh": self.bounds.intruder_fresh},
            "elapsed": round(self.elapsed, 3),
        }


# ---------------------------------------------------------------------------
# secrecy

def default_targets(p: ProtocolTemplate) -> list[Target]:
    declared = [(v, r) for v, r in p.secrets]
    if declared:
        out = []
        for v, r in declared:
            views = [r] if r is not None else list(p.roles)
            out += [Target(v, view) for view in views]
        return sorted(set(out))
    _, unrevealed = revealed_vars(p)
    return sorted(Target(v, r) for v in unrevealed for r in p.roles)


def evaluable(model: Model, target: Target) -> bool:
    """Whether some step of the viewpoint's session knows X and every role."""
    need = set(model.protocol.roles) | {target.var}
    return any(need <= kn.basic for kn in model.table[target.viewpoint])


def secrecy_violated(state: State, session: PartialSession, var: Var,
                     model: Model) -> bool:
    kn = model.table[session.role][session.length]
    roles = model.protocol.roles
    if var not in kn.basic or not all(r in kn.basic for r in roles):
        return False
    b = session.binding
    if any(b[r] == INTRUDER for r in roles):
        return False
    return b[var] in state.intruder.basic


def _violation(state: State, model: Model, targets: list[Target]):
    for t in targets:
        for s in state.sessions:
            if s.role == t.viewpoint and secrecy_violated(state, s, t.var, model):
                return t, s
    return None


def _sent_terms(model: Model, trace: Trace) -> list[Term]:
    return model.intruder_seeds() + [e.message for e in trace.events if e.kind == "send"]


@contextmanager
def _quiet_gc():
    # the search allocates millions of small immutable objects and frees
    # none of them; cyclic collection passes only cost time
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def find_secrecy_attack(p: ProtocolTemplate | Model, bounds: Bounds | None = None,
                        targets=None, scenario: Scenario | None = None,
                        max_states: int | None = None,
                        time_limit: float | None = None) -> SearchResult:
    """Breadth-first search for the shallowest secrecy violation.

    ``max_states`` and ``time_limit`` (seconds) cut the search short; the
    result then reports ``exhausted=False``.
    """
    with _quiet_gc():
        return _bfs(p, bounds, targets, scenario, max_states, time_limit)


def _bfs(p, bounds, targets, scenario, max_states, time_limit) -> SearchResult:
    start = time.perf_counter()
    model = p if isinstance(p, Model) else Model(p, bounds, scenario)
    if targets is None:
        targets = default_targets(model.protocol)
    targets = [t if isinstance(t, Target) else Target(*t) for t in targets]
    good = [t for t in targets if evaluable(model, t)]
    bad = [t for t in targets if not evaluable(model, t)]

    views = {t.viewpoint for t in good}
    s0 = initial_state(model)
    # node i: parent index, events of the move leading to it, BFS depth
    parent: list[int | None] = [None]
    via: list[tuple[Event, ...]] = [()]
    depth = [0]
    seen = {canonical_key(s0, model): 0}
    # other shortest ways into a node, used to pick the plainest witness
    alternatives: dict[int, list] = {}
    queue = deque([(0, s0)])
    hits = []
    found = _violation(s0, model, good)
    if found is not None:
        hits.append((0, found))
    exhausted = not hits
    while queue and not hits or (hits and queue and depth[queue[0][0]] < depth[hits[0][0]]):
        if max_states is not None and len(parent) >= max_states:
            exhausted = False
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            exhausted = False
            break
        idx, state = queue.popleft()
        for move in moves(state, model):
            if _inert(move, model, views):
                continue
            nxt = move[-1][1]
            k = canonical_key(nxt, model)
            j = seen.get(k)
            events = model.share_events(e for e, _ in move)
            if j is not None:
                if depth[j] == depth[idx] + 1:
                    alternatives.setdefault(j, []).append((idx, events))
                continue
            j = seen[k] = len(parent)
            parent.append(idx)
            via.append(events)
            depth.append(depth[idx] + 1)
            found = _violation(nxt, model, good)
            if found is not None:
                hits.append((j, found))
                exhausted = False
            elif not hits:
                queue.append((j, model.share(nxt)))

    attack = None
    if hits:
        ranked = []
        for i, (t, _) in hits:
            for path in _paths(parent, via, alternatives, i):
                ranked.append((_simplicity(path, t), t, path))
        ranked.sort(key=lambda x: x[0])
        for _, t, path in ranked:
            attack = _report(model, path, t)
            if attack is not None:
                break
    return SearchResult(attack, len(parent), exhausted, good, bad, model.bounds,
                        time.perf_counter() - start)


def _silent(model: Model, sess: PartialSession) -> bool:
    """No send left in the session's future."""
    return not any(m.sender == sess.role for m in model.sessions[sess.role][sess.length:])


def _dishonest(model: Model, sess: PartialSession) -> bool:
    b = sess.binding
    return any(b.get(r) == INTRUDER for r in model.protocol.roles)


def _inert(move, model: Model, views) -> bool:
    """A lone receive after which its session never sends again changes
    nothing the secrecy check can see, unless the session may still witness
    a leak: it plays a viewpoint role with honest partners only."""
    if len(move) != 1:
        return False
    ev, nxt = move[0]
    if ev.kind != "receive":
        return False
    sess = nxt.sessions[len(nxt.sessions) - 1 if ev.slot is None else ev.slot]
    if not _silent(model, sess):
        return False
    return ev.role not in views or _dishonest(model, sess)


def _paths(parent, via, alternatives, idx, limit: int = 5000) -> list[list[Event]]:
    """Event sequences from the root to ``idx`` through shortest parents."""
    out = []

    def walk(i, suffix):
        if len(out) >= limit:
            return
        if parent[i] is None:
            out.append(suffix)
            return
        for p, events in [(parent[i], via[i]), *alternatives.get(i, ())]:
            walk(p, list(events) + suffix)

    walk(idx, [])
    return out


def _same_up_to_fresh(model: Model, x: Term, y: Term, ren: dict) -> bool:
    if model.is_honest_fresh(x) or model.is_honest_fresh(y):
        if type(x) is not type(y) or not model.is_honest_fresh(x):
            return False
        got = ren.setdefault(x, y)
        return got == y
    if type(x) is not type(y):
        return False
    if isinstance(x, (Tup, Enc)):
        kx, ky = x.children(), y.children()
        return len(kx) == len(ky) and all(
            _same_up_to_fresh(model, a, b, ren) for a, b in zip(kx, ky))
    return x == y


def _realize(model: Model, events: list[Event]) -> Trace | None:
    """Replay ``events`` allowing honest fresh values and session positions
    to differ consistently; paths stitched through equivalent states only
    agree up to such renaming."""
    trace = Trace(initial_state(model))
    ren: dict = {}
    for e in events:
        for ev, nxt in successors(trace.final, model):
            if (ev.kind, ev.actor, ev.sender, ev.receiver, ev.role, ev.index) != \
                    (e.kind, e.actor, e.sender, e.receiver, e.role, e.index):
                continue
            trial = dict(ren)
            if _same_up_to_fresh(model, e.message, ev.message, trial):
                ren = trial
                trace.steps.append((ev, nxt))
                break
        else:
            return None
    return trace


def _report(model: Model, events: list[Event], target: Target) -> AttackReport | None:
    trace = _realize(model, events)
    found = None if trace is None else _violation(trace.final, model, [target])
    if found is None:
        return None
    sess = found[1]
    value = sess.binding[target.var]
    deriv = explain(INTRUDER, _sent_terms(model, trace), value, agents_known=True) or []
    return AttackReport(target, trace, sess, value, deriv)


def _simplicity(events: list[Event], target):
    # among equally short attacks prefer the plainest story: fewest narration
    # lines (honest messages actually delivered), then the fewest events
    lines = narration_lines(events)
    return (len(lines), len(events), target, lines)


# ---------------------------------------------------------------------------
# authenticity

@dataclass(frozen=True)
class AuthViolation:
    receive: Event
    expected_role: AgentVar
    position: int | None = None

    def __str__(self):
        e = self.receive
        where = "" if self.position is None else f"event {self.position:02d}: "
        return (f"{where}{e.receiver} accepted message {e.index} as coming from "
                f"{e.sender} playing {self.expected_role}, but {e.sender} never sent {e.message}")


def _sender_role(p: ProtocolTemplate, index: int) -> AgentVar:
    return p.messages[index - 1].sender


def check_authenticity(trace: Trace | list[Event], p: ProtocolTemplate) -> list[AuthViolation]:
    """Receives attributed to an honest agent without a matching earlier send."""
    events = trace.events if isinstance(trace, Trace) else list(trace)
    out = []
    for i, e in enumerate(events):
        if e.kind != "receive" or e.sender == INTRUDER:
            continue
        role_b = _sender_role(p, e.index)
        ok = any(f.kind == "send" and f.sender == e.sender and f.receiver == e.receiver
                 and f.message == e.message and f.role == role_b and f.index == e.index
                 for f in events[:i])
        if not ok:
            out.append(AuthViolation(e, role_b, i + 1))
    return out


def _has_sent(state: State, model: Model, e: Event) -> bool:
    role_b = _sender_role(model.protocol, e.index)
    msg = model.protocol.messages[e.index - 1]
    pos = next(j for j, m in enumerate(model.sessions[role_b]) if m.index == e.index)
    for s in state.sessions:
        if s.role != role_b or s.owner != e.sender or s.length <= pos:
            continue
        if s.value(msg.receiver) == e.receiver and s.value(msg.content) == e.message:
            return True
    return False


@dataclass
class AuthResult:
    violations: list[tuple[AuthViolation, Trace]]    # the first few, with witnesses
    count: int
    explored: int
    transitions: int
    exhausted: bool

    def to_json(self) -> dict:
        return {"violations": [{"violation": str(v), "trace": [_event_json(e) for e in t.events]}
                               for v, t in self.violations],
                "count": self.count,
                "explored": self.explored, "transitions": self.transitions,
                "exhausted": self.exhausted}


class _Tree:
    """Parent links and move events of every visited state."""

    def __init__(self):
        self.parent: list[int | None] = [None]
        self.via: list[tuple[Event, ...]] = [()]

    def add(self, idx: int, move, model: Model) -> int:
        self.parent.append(idx)
        self.via.append(model.share_events(e for e, _ in move))
        return len(self.parent) - 1

    def events(self, idx: int) -> list[Event]:
        chunks = []
        while self.parent[idx] is not None:
            chunks.append(self.via[idx])
            idx = self.parent[idx]
        return [e for chunk in reversed(chunks) for e in chunk]

    def __len__(self):
        return len(self.parent)


def explore(model: Model, visit, max_states: int | None = None,
            prune=None, time_limit: float | None = None) -> tuple[_Tree, bool]:
    """BFS over the bounded space calling ``visit(tree, idx, state, move)``
    on every move.  Moves for which ``prune(move)`` holds are visited but
    not expanded.  Returns the search tree and whether it was exhausted."""
    start = time.perf_counter()
    s0 = initial_state(model)
    tree = _Tree()
    seen = {canonical_key(s0, model)}
    queue = deque([(0, s0)])
    while queue:
        if max_states is not None and len(tree) >= max_states:
            return tree, False
        if time_limit is not None and time.perf_counter() - start > time_limit:
            return tree, False
        idx, state = queue.popleft()
        for move in moves(state, model):
            visit(tree, idx, state, move)
            if prune is not None and prune(move):
                continue
            nxt = move[-1][1]
            k = canonical_key(nxt, model)
            if k in seen:
                continue
            seen.add(k)
            queue.append((tree.add(idx, move, model), model.share(nxt)))
    return tree, True


def authcheck(p: ProtocolTemplate | Model, bounds: Bounds | None = None,
              scenario: Scenario | None = None, max_states: int | None = None,
              limit: int = 20, time_limit: float | None = None) -> AuthResult:
    """Check every explored receive transition for a matching honest send.

    Sessions are never removed, so whether the claimed sender already sent
    the message can be read off the source state.  A receive that ends a
    session without answering is checked but not expanded: nothing after it
    could differ.
    """
    model = p if isinstance(p, Model) else Model(p, bounds, scenario)
    found: list[tuple[AuthViolation, Trace]] = []
    count = [0]
    total = [0]

    def visit(tree, idx, state, move):
        count[0] += 1
        # only the first event of a move can be a receive
        ev, _ = move[0]
        if ev.kind != "receive" or ev.sender == INTRUDER:
            return
        if _has_sent(state, model, ev):
            return
        total[0] += 1
        if len(found) < limit:
            events = tree.events(idx) + [e for e, _ in move]
            pos = len(tree.events(idx)) + 1
            found.append((AuthViolation(ev, _sender_role(model.protocol, ev.index), pos),
                          replay(model, events)))

    with _quiet_gc():
        tree, exhausted = explore(model, visit, max_states,
                                  prune=lambda move: _inert(move, model, ()),
                                  time_limit=time_limit)
    return AuthResult(found, total[0], len(tree), count[0], exhausted)
