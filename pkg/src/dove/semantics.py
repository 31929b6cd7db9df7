"""Operational semantics: partial sessions, states and transitions.

A state holds a tuple of partial sessions (a multiset kept in insertion
order) and the intruder's knowledge.  Sessions spawn lazily when their first
event fires.  Honest sends bind new nonces and keys to fresh values; honest
receives are template directed: the intruder only builds messages that have
the shape the receiver expects (the lazy intruder).
"""
from __future__ import annotations

import itertools
import marshal
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping

from .deduction import KnowledgeSet, derivable_from, intruder_close
from .protocol import (
    NotRealizable, ProtocolTemplate, check_realizable, new_vars,
)
from .term import (
    INTRUDER, Agent, AgentVar, Constant, Enc, KeyVar, Nonce, NonceVar,
    PrivKey, PubKey, SharedKey, ShortKey, Term, Tup, Var, evaluate, is_ground,
    sort_of, tup,
)

__all__ = [
    "Bounds", "Scenario", "PartialSession", "State", "Event", "Trace",
    "Model", "NotEnabled", "initial_state", "enabled_sends",
    "enabled_receives", "successors", "moves", "step", "replay", "canonical_key",
    "render_trace", "narrate", "instance_of",
]


class NotEnabled(ValueError):
    pass


@dataclass(frozen=True)
class Bounds:
    max_sessions: int = 2          # per role
    max_events: int = 12
    synth_depth: int = 2
    intruder_fresh: int = 1

    def __post_init__(self):
        for name in ("max_sessions", "max_events", "synth_depth", "intruder_fresh"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """Who may start which role, and who a role variable may denote.

    ``players`` maps role names to honest agents.  ``pool`` always contains
    the intruder exactly once.  ``partners`` restricts the agents a session
    may bind to each role name; roles left out range over the whole pool.
    """

    players: Mapping[str, tuple[Agent, ...]]
    pool: tuple[Agent, ...]
    partners: Mapping[str, tuple[Agent, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if sum(1 for a in self.pool if a == INTRUDER) != 1:
            raise ValueError("agent pool must contain the intruder exactly once")
        for agents in self.players.values():
            if INTRUDER in agents:
                raise ValueError("the intruder does not run honest sessions")

    @classmethod
    def default(cls, p: ProtocolTemplate, any_role: bool = False) -> Scenario:
        """One honest agent per role, named after it in lower case.

        Each role is then believed to be played by its own agent or by the
        intruder.  With ``any_role`` every agent plays and may be believed to
        play every role.
        """
        honest = tuple(Agent(r.name.lower()) for r in p.roles)
        pool = (*honest, INTRUDER)
        if any_role:
            return cls({r.name: honest for r in p.roles}, pool)
        players = {r.name: (Agent(r.name.lower()),) for r in p.roles}
        partners = {r.name: (Agent(r.name.lower()), INTRUDER) for r in p.roles}
        return cls(players, pool, partners)


@dataclass(frozen=True)
class PartialSession:
    role: AgentVar
    owner: Agent
    length: int
    valuation: tuple[tuple[Term, Term], ...]   # sorted (template, value)

    @cached_property
    def binding(self) -> dict[Term, Term]:
        return dict(self.valuation)

    def value(self, t: Term) -> Term | None:
        return evaluate(t, self.binding)

    def __str__(self):
        vals = ", ".join(f"{k}={v}" for k, v in self.valuation)
        return f"{self.role}@{self.owner}[{self.length}]({vals})"


@dataclass(frozen=True)
class State:
    sessions: tuple[PartialSession, ...]
    intruder: KnowledgeSet
    next_nonce: int
    next_key: int
    events: int = 0
    quiet: bool = True        # no receive has happened yet


@dataclass(frozen=True)
class Event:
    kind: str                 # "send" or "receive"
    actor: Agent
    sender: Agent
    receiver: Agent
    message: Term
    role: AgentVar
    index: int                # protocol message number
    slot: int | None          # session position, None when it spawns

    def __str__(self):
        arrow = "->" if self.kind == "send" else "<-"
        return f"{self.actor} {arrow} ({self.sender}, {self.receiver}, {self.message})"


@dataclass
class Trace:
    initial: State
    steps: list[tuple[Event, State]] = field(default_factory=list)

    @property
    def events(self) -> list[Event]:
        return [e for e, _ in self.steps]

    @property
    def final(self) -> State:
        return self.steps[-1][1] if self.steps else self.initial

    def __len__(self):
        return len(self.steps)


# ---------------------------------------------------------------------------
# model

def _seed_offset() -> int:
    raw = os.environ.get("DOVE_SEED", "").strip()
    return int(raw) if raw else 0


class Model:
    """Precomputed per-role data shared by every state of one search."""

    def __init__(self, p: ProtocolTemplate, bounds: Bounds | None = None,
                 scenario: Scenario | None = None, fresh_offset: int | None = None):
        report = check_realizable(p)
        if not report.realizable:
            raise NotRealizable(str(report.failure))
        self.protocol = p
        self.bounds = bounds or Bounds()
        self.scenario = scenario or Scenario.default(p)
        self.sessions = report.sessions
        self.table = report.table
        self.newvars = new_vars(p)
        self.roles = frozenset(p.roles)
        self.pool = tuple(sorted(self.scenario.pool))
        self.allowed = {r: frozenset(self.scenario.partners.get(r.name, self.pool))
                        for r in p.roles}
        self.fresh_offset = _seed_offset() if fresh_offset is None else fresh_offset
        # intruder-owned values are 1..F; honest fresh values start above
        self.first_fresh = self.bounds.intruder_fresh + 1 + self.fresh_offset
        self._profiles: dict = {}
        self._shapes: dict = {}
        self._shared: dict = {}

    def intruder_seeds(self) -> list[Term]:
        f = self.bounds.intruder_fresh
        seeds = [Nonce(i) for i in range(1, f + 1)]
        seeds += [ShortKey(i) for i in range(1, f + 1)]
        return seeds + sorted(self.protocol.intruder)

    def players(self, role: AgentVar) -> tuple[Agent, ...]:
        return tuple(self.scenario.players.get(role.name, ()))

    def context(self, owner: Agent, role: AgentVar, opaque) -> _Ctx:
        return _Ctx(owner, role, self.allowed, opaque)

    def partners(self, var: AgentVar, owner: Agent) -> list[Agent]:
        ok = self.allowed.get(var)
        return [a for a in self.pool if a != owner and (ok is None or a in ok)]

    def is_honest_fresh(self, t: Term) -> bool:
        return isinstance(t, (Nonce, ShortKey)) and t.n > self.bounds.intruder_fresh

    def share(self, state: State) -> State:
        """An equal state whose sessions and intruder knowledge are the
        copies already held by earlier stored states, when there are any."""
        pool = self._shared
        sessions = tuple([pool.setdefault(x, x) for x in state.sessions])
        intr = pool.setdefault(state.intruder, state.intruder)
        return State(sessions, intr, state.next_nonce, state.next_key,
                     state.events, state.quiet)

    def share_events(self, events) -> tuple[Event, ...]:
        pool = self._shared
        return tuple([pool.setdefault(e, e) for e in events])


def initial_state(p: ProtocolTemplate | Model, bounds: Bounds | None = None,
                  scenario: Scenario | None = None) -> State:
    model = p if isinstance(p, Model) else Model(p, bounds, scenario)
    intr = intruder_close(KnowledgeSet(INTRUDER), model.intruder_seeds())
    return State((), intr, model.first_fresh, model.first_fresh)


# ---------------------------------------------------------------------------
# matching

class _Ctx:
    __slots__ = ("owner", "role", "roles", "opaque")

    # ``roles`` maps each role variable to the agents it may denote

    def __init__(self, owner, role, roles, opaque):
        self.owner = owner
        self.role = role
        self.roles = roles
        self.opaque = opaque


def _sort_ok(var: Var, val: Term, ctx: _Ctx | None) -> bool:
    if sort_of(val) != var.sort:
        return False
    if ctx is not None and isinstance(var, AgentVar) and var != ctx.role:
        ok = ctx.roles.get(var)
        if ok is not None and (val == ctx.owner or val not in ok):
            return False
    return True


def _match(p: Term, val: Term, b: dict, ctx: _Ctx, pending: list) -> bool:
    """Bind the receiver-visible components of ``p`` against ``val``.

    Encryptions in ``ctx.opaque`` are bound whole after an instance check.
    Shared keys whose arguments are not yet known are deferred.
    """
    known = b.get(p)
    if known is not None:
        return known == val
    if isinstance(p, Var):
        if not _sort_ok(p, val, ctx):
            return False
        b[p] = val
        return True
    if isinstance(p, Tup):
        if not isinstance(val, Tup) or len(val.items) != len(p.items):
            return False
        return all(_match(x, y, b, ctx, pending) for x, y in zip(p.items, val.items))
    if isinstance(p, Enc):
        if not isinstance(val, Enc):
            return False
        if p in ctx.opaque:
            if not instance_of(p, val):
                return False
            b[p] = val
            return True
        return (_match(p.key, val.key, b, ctx, pending)
                and _match(p.body, val.body, b, ctx, pending))
    if isinstance(p, (PubKey, PrivKey)):
        return type(val) is type(p) and _match(p.agent, val.agent, b, ctx, pending)
    if isinstance(p, SharedKey):
        if not isinstance(val, SharedKey):
            return False
        ev = evaluate(p, b)
        if ev is not None:
            return ev == val
        for mine, theirs in ((p.a, p.b), (p.b, p.a)):
            fixed = evaluate(mine, b)
            if fixed is not None:
                rest = val.other(fixed)
                return rest is not None and _match(theirs, rest, b, ctx, pending)
        pending.append((p, val))
        return True
    return p == val


def instance_of(p: Term, val: Term, w: dict | None = None) -> bool:
    """Whether ``val`` is a sort-respecting instance of template ``p``."""
    return _instance(p, val, {} if w is None else w) is not None


def _instance(p: Term, val: Term, w: dict) -> dict | None:
    if isinstance(p, Var):
        old = w.get(p)
        if old is not None:
            return w if old == val else None
        if sort_of(val) != p.sort:
            return None
        w = dict(w)
        w[p] = val
        return w
    if isinstance(p, Tup):
        if not isinstance(val, Tup) or len(val.items) != len(p.items):
            return None
        for x, y in zip(p.items, val.items):
            w = _instance(x, y, w)
            if w is None:
                return None
        return w
    if isinstance(p, Enc):
        if not isinstance(val, Enc):
            return None
        w = _instance(p.key, val.key, w)
        return None if w is None else _instance(p.body, val.body, w)
    if isinstance(p, (PubKey, PrivKey)):
        return _instance(p.agent, val.agent, w) if type(val) is type(p) else None
    if isinstance(p, SharedKey):
        if not isinstance(val, SharedKey):
            return None
        for x, y in ((val.a, val.b), (val.b, val.a)):
            w1 = _instance(p.a, x, w)
            if w1 is not None:
                w2 = _instance(p.b, y, w1)
                if w2 is not None:
                    return w2
        return None
    return w if p == val else None


def absorb(ctx: _Ctx, kn_next: KnowledgeSet, base: Mapping[Term, Term],
           pairs) -> tuple[tuple[Term, Term], ...] | None:
    """Valuation of ``kn_next`` after matching ``pairs``, or None on mismatch."""
    b = dict(base)
    pending: list = []
    for p, val in pairs:
        if not _match(p, val, b, ctx, pending):
            return None
    while pending:
        todo, pending = pending, []
        for p, val in todo:
            if not _match(p, val, b, ctx, pending):
                return None
        if len(pending) == len(todo):
            return None
    out = []
    for e in kn_next.basic | kn_next.crypto:
        v = b.get(e)
        if v is None:
            v = evaluate(e, b)
            if v is None:
                return None
        out.append((e, v))
    out.sort()
    return tuple(out)


def _basic_part(session: PartialSession) -> dict[Term, Term]:
    return {k: v for k, v in session.valuation if not isinstance(k, Enc)}


def _crypto_part(session: PartialSession) -> list[tuple[Term, Term]]:
    return [(k, v) for k, v in session.valuation if isinstance(k, Enc)]


# ---------------------------------------------------------------------------
# spawning

def _spawn_bindings(model: Model, role: AgentVar, owner: Agent) -> list[dict]:
    """Bindings of the variables in Kn_{role,0} for a fresh session of ``owner``."""
    kn0 = model.table[role][0]
    need: set[Var] = set()
    for e in kn0.basic | kn0.crypto:
        if isinstance(e, Var):
            need.add(e)
        else:
            need |= {x for x in _vars(e)}
    need.discard(role)
    agents = sorted(v for v in need if isinstance(v, AgentVar))
    others = sorted(v for v in need if not isinstance(v, AgentVar))
    if others:
        raise NotEnabled(f"initial knowledge of {role} holds non-agent variables {others}")
    out = []
    for combo in itertools.product(*(model.partners(v, owner) for v in agents)):
        b = {role: owner}
        b.update(zip(agents, combo))
        out.append(b)
    return out


def _vars(t: Term):
    if isinstance(t, Var):
        yield t
    for c in t.children():
        yield from _vars(c)


def _initial_session(model: Model, role: AgentVar, owner: Agent, b: dict) -> PartialSession:
    kn0 = model.table[role][0]
    ctx = model.context(owner, role, kn0.crypto)
    val = absorb(ctx, kn0, b, [])
    if val is None:
        raise NotEnabled(f"cannot evaluate initial knowledge of {role}")
    return PartialSession(role, owner, 0, val)


def _open_slots(model: Model, state: State, want_send: bool):
    """(slot, session) for existing sessions plus spawnable ones (slot None).

    The event budget gates receives and session starts only: once a session
    has started, its answers are always allowed to go out.
    """
    budget_left = state.events < model.bounds.max_events
    counts: dict[AgentVar, int] = {}
    for i, s in enumerate(state.sessions):
        counts[s.role] = counts.get(s.role, 0) + 1
        msgs = model.sessions[s.role]
        if s.length < len(msgs) and (msgs[s.length].sender == s.role) == want_send:
            if want_send or budget_left:
                yield i, s
    if not budget_left:
        return
    for role in model.protocol.roles:
        msgs = model.sessions[role]
        if not msgs or (msgs[0].sender == role) != want_send:
            continue
        if counts.get(role, 0) >= model.bounds.max_sessions:
            continue
        for owner in model.players(role):
            for b in _spawn_bindings(model, role, owner):
                yield None, _initial_session(model, role, owner, b)


def _replace(state: State, slot: int | None, session: PartialSession) -> tuple:
    if slot is None:
        return (*state.sessions, session)
    ss = list(state.sessions)
    ss[slot] = session
    return tuple(ss)


# ---------------------------------------------------------------------------
# sends

def enabled_sends(state: State, model: Model) -> list[tuple[Event, State]]:
    out = []
    for slot, sess in _open_slots(model, state, want_send=True):
        out.extend(_sends_of(model, state, slot, sess))
    return out


def _sends_of(model: Model, state: State, slot, sess: PartialSession):
    role, owner, l = sess.role, sess.owner, sess.length
    msg = model.sessions[role][l]
    kn_next = model.table[role][l + 1]
    base = _basic_part(sess)
    need = set(model.newvars[msg.index - 1]) | {msg.receiver}
    need = sorted(v for v in need if v not in base)
    agents = [v for v in need if isinstance(v, AgentVar)]
    nonces = [v for v in need if isinstance(v, NonceVar)]
    keys = [v for v in need if isinstance(v, KeyVar)]
    fresh = {v: Nonce(state.next_nonce + i) for i, v in enumerate(nonces)}
    fresh.update({v: ShortKey(state.next_key + i) for i, v in enumerate(keys)})
    ctx = model.context(owner, role, kn_next.crypto)
    out = []
    for combo in itertools.product(*(model.partners(v, owner) for v in agents)):
        b = dict(sess.binding)
        b.update(fresh)
        b.update(zip(agents, combo))
        m = evaluate(msg.content, b)
        if m is None:
            continue
        bb = dict(base)
        bb.update(fresh)
        bb.update(zip(agents, combo))
        val = absorb(ctx, kn_next, bb, _crypto_part(sess))
        if val is None:
            continue
        receiver = b[msg.receiver]
        new = PartialSession(role, owner, l + 1, val)
        nxt = State(_replace(state, slot, new), intruder_close(state.intruder, [m]),
                    state.next_nonce + len(nonces), state.next_key + len(keys),
                    state.events + 1, state.quiet)
        ev = Event("send", owner, owner, receiver, m, role, msg.index, slot)
        out.append((ev, nxt))
    return out


# ---------------------------------------------------------------------------
# receives (lazy intruder)

class _Gen:
    """Template-directed enumeration of intruder-derivable messages."""

    def __init__(self, model: Model, state: State, ctx: _Ctx):
        intr = state.intruder
        self.intr = intr
        self.ctx = ctx
        self.pool = model.pool
        self.nonces = sorted(t for t in intr.basic if isinstance(t, Nonce))
        self.keys = sorted(t for t in intr.basic if isinstance(t, ShortKey))
        self.held = sorted(intr.crypto | intr.opened)
        self._known = intr.basic | intr.crypto | intr.opened
        self._derivable: dict = {}

    def derivable(self, t: Term, depth: int | None) -> bool:
        k = (t, depth)
        r = self._derivable.get(k)
        if r is None:
            r = self._derivable[k] = derivable_from(self._known, t, depth)
        return r

    def domain(self, var: Var, free: bool):
        if isinstance(var, AgentVar):
            if free:
                return self.pool
            return [a for a in self.pool if _sort_ok(var, a, self.ctx)]
        if isinstance(var, NonceVar):
            return self.nonces
        return self.keys

    def gen(self, p: Term, b: dict, depth: int, free: bool) -> Iterator[tuple[Term, dict]]:
        known = b.get(p)
        if known is not None:
            if self.derivable(known, depth):
                yield known, b
            return
        if isinstance(p, Var):
            for val in self.domain(p, free):
                b2 = dict(b)
                b2[p] = val
                yield val, b2
        elif isinstance(p, Tup):
            yield from self._gen_tuple(p.items, 0, b, depth, free, ())
        elif isinstance(p, (PubKey, PrivKey)):
            for a, b2 in self.gen(p.agent, b, depth, free):
                k = type(p)(a)
                if self.derivable(k, None):
                    yield k, b2
        elif isinstance(p, SharedKey):
            for x, b2 in self.gen(p.a, b, depth, free):
                for y, b3 in self.gen(p.b, b2, depth, free):
                    k = SharedKey(x, y)
                    if self.derivable(k, None):
                        yield k, b3
        elif isinstance(p, Enc):
            yield from self._gen_enc(p, b, depth, free)
        elif isinstance(p, (Constant, Agent, Nonce, ShortKey)):
            if self.derivable(p, depth):
                yield p, b

    def _gen_tuple(self, items, i, b, depth, free, acc):
        if i == len(items):
            yield tup(*acc), b
            return
        for v, b2 in self.gen(items[i], b, depth, free):
            yield from self._gen_tuple(items, i + 1, b2, depth, free, acc + (v,))

    def _gen_enc(self, p: Enc, b: dict, depth: int, free: bool):
        if not free and p in self.ctx.opaque:
            # the receiver stores this component unread: any derivable
            # instance of the expected shape will do
            found = {c for c in self.held if instance_of(p, c)}
            if depth > 0:
                found |= {v for v, _ in self.gen(p, {}, depth, True)}
            for c in sorted(found):
                b2 = dict(b)
                b2[p] = c
                yield c, b2
            return
        seen = set()
        for c in self.held:
            if free:
                w = _instance(p, c, b)
                if w is not None:
                    seen.add(c)
                    yield c, w
            else:
                b2 = dict(b)
                if _match(p, c, b2, self.ctx, []):
                    seen.add(c)
                    yield c, b2
        if depth <= 0:
            return
        for k, b2 in self.gen(p.key, b, depth, free):
            for body, b3 in self.gen(p.body, b2, depth - 1, free):
                c = Enc(body, k)
                if c not in seen:
                    yield c, b3


def enabled_receives(state: State, model: Model) -> list[tuple[Event, State]]:
    out = []
    for slot, sess in _open_slots(model, state, want_send=False):
        out.extend(_receives_of(model, state, slot, sess))
    return out


def _receives_of(model: Model, state: State, slot, sess: PartialSession):
    role, owner, l = sess.role, sess.owner, sess.length
    msg = model.sessions[role][l]
    kn_next = model.table[role][l + 1]
    ctx = model.context(owner, role, kn_next.crypto)
    base = _basic_part(sess)
    old_crypto = _crypto_part(sess)
    g = _Gen(model, state, ctx)
    b0 = dict(base)
    for k, v in old_crypto:
        if k in kn_next.crypto:
            b0[k] = v
    if msg.sender in b0:
        claims = [b0[msg.sender]]
    else:
        claims = [a for a in model.pool if _sort_ok(msg.sender, a, ctx)]
    out = []
    seen = set()
    for claimed in claims:
        b1 = dict(b0)
        b1[msg.sender] = claimed
        for m, _ in g.gen(msg.content, b1, model.bounds.synth_depth, False):
            if (claimed, m) in seen:
                continue
            seen.add((claimed, m))
            if not g.derivable(m, model.bounds.synth_depth):
                continue
            val = absorb(ctx, kn_next, base,
                         [*old_crypto, (msg.sender, claimed), (msg.content, m)])
            if val is None:
                continue
            new = PartialSession(role, owner, l + 1, val)
            nxt = State(_replace(state, slot, new), state.intruder,
                        state.next_nonce, state.next_key, state.events + 1, False)
            ev = Event("receive", owner, claimed, owner, m, role, msg.index, slot)
            out.append((ev, nxt))
    out.sort(key=lambda es: (es[0].sender, es[0].message))
    return out


# ---------------------------------------------------------------------------
# stepping

def successors(state: State, model: Model) -> list[tuple[Event, State]]:
    return enabled_sends(state, model) + enabled_receives(state, model)


def _react(model: Model, state: State, slot: int, done: list):
    """Complete the pending sends of the session at ``slot``."""
    sess = state.sessions[slot]
    msgs = model.sessions[sess.role]
    if sess.length < len(msgs) and msgs[sess.length].sender == sess.role:
        out = []
        for ev, nxt in _sends_of(model, state, slot, sess):
            out += _react(model, nxt, slot, done + [(ev, nxt)])
        return out
    return [done]


def moves(state: State, model: Model) -> list[list[tuple[Event, State]]]:
    """Successors in send-eager normal form.

    A send never disables another event and only adds to what the intruder
    knows, so any trace can be rearranged to make every session answer as
    soon as it can, and sessions that open with a send start before the
    first receive.  Each move is one receive (or session start) followed by
    the sends it triggers; the result lists the (event, state) steps.
    """
    out = []
    if state.quiet and state.events < model.bounds.max_events:
        for slot, sess in _open_slots(model, state, want_send=True):
            if slot is None:
                for ev, nxt in _sends_of(model, state, None, sess):
                    out += _react(model, nxt, len(nxt.sessions) - 1, [(ev, nxt)])
    for slot, sess in _open_slots(model, state, want_send=False):
        for ev, nxt in _receives_of(model, state, slot, sess):
            at = len(nxt.sessions) - 1 if slot is None else slot
            out += _react(model, nxt, at, [(ev, nxt)])
    return out


def step(state: State, event: Event, model: Model) -> State:
    for e, nxt in successors(state, model):
        if e == event:
            return nxt
    raise NotEnabled(str(event))


def replay(model: Model, events) -> Trace:
    s = initial_state(model)
    trace = Trace(s)
    for e in events:
        s = step(s, e, model)
        trace.steps.append((e, s))
    return trace


# ---------------------------------------------------------------------------
# canonical state keys

def _profile(t: Term, model: Model) -> tuple[int, tuple]:
    """(shape id, honest fresh atoms in order) with fresh atoms masked out."""
    cache = model._profiles
    r = cache.get(t)
    if r is not None:
        return r
    if isinstance(t, (Nonce, ShortKey)) and model.is_honest_fresh(t):
        shape, atoms = (0, type(t).__name__), (t,)
    elif isinstance(t, (Tup, Enc)):
        subs = [_profile(x, model) for x in t.children()]
        shape = (1 if isinstance(t, Tup) else 2, tuple(m for m, _ in subs))
        atoms = tuple(a for _, xs in subs for a in xs)
    else:
        shape, atoms = (3, t.sort_key), ()
    ids = model._shapes
    sid = ids.get(shape)
    if sid is None:
        sid = ids[shape] = len(ids)
    r = cache[t] = (sid, atoms)
    return r


def canonical_key(state: State, model: Model) -> bytes:
    """Key identifying ``state`` up to renaming of honest fresh values.

    Sessions are ordered by their shape with fresh values masked, then fresh
    values are numbered by first appearance.  Ties between sessions of equal
    shape may keep two equivalent states apart but never merge distinct ones.
    """
    ranked = []
    for s in state.sessions:
        profs = [_profile(v, model) for _, v in s.valuation]
        shape = (s.role.sort_key, s.owner.sort_key, s.length, tuple(m for m, _ in profs))
        ranked.append((shape, profs))
    ranked.sort(key=lambda x: x[0])
    ren: dict = {}

    def number(atoms):
        out = []
        for a in atoms:
            n = ren.get(a)
            if n is None:
                n = ren[a] = len(ren)
            out.append(n)
        return tuple(out)

    parts = tuple((shape, tuple(number(xs) for _, xs in profs)) for shape, profs in ranked)
    intr = state.intruder

    def encode(terms):
        # number unseen values in an order that does not depend on set
        # iteration: by shape, then by the values already numbered
        profs = [_profile(t, model) for t in terms]
        profs.sort(key=lambda p: (p[0], tuple(ren.get(a, -1) for a in p[1])))
        return tuple(sorted((m, number(xs)) for m, xs in profs))

    key = (parts, encode(intr.basic), encode(intr.crypto | intr.opened),
           state.events, state.quiet)
    # format 2 predates back-references, so equal keys give equal bytes
    return marshal.dumps(key, 2)


# ---------------------------------------------------------------------------
# rendering

def render_trace(trace: Trace) -> list[str]:
    """One numbered line per event plus the intruder's new basic knowledge."""
    lines = []
    prev = trace.initial
    for i, (e, s) in enumerate(trace.steps, start=1):
        if e.kind == "send":
            line = f"{i:02d} - {e.sender} -> {e.receiver} : {e.message}"
        else:
            line = f"{i:02d} - {e.receiver} <- {e.sender} : {e.message}"
        gained = sorted(s.intruder.basic - prev.intruder.basic)
        if gained:
            line += "    [I learns " + ", ".join(map(str, gained)) + "]"
        lines.append(line)
        prev = s
    return lines


def narrate(events) -> list[tuple[str, str, str, Term]]:
    """Fold each send with the identical receive it feeds.

    Returns (from, to, label, message) rows in the usual protocol-narration
    style: ``I_x`` marks the intruder forging or intercepting on behalf of x.
    """
    events = list(events)
    used: set[int] = set()
    rows = []
    for i, e in enumerate(events):
        if e.kind == "send":
            j = next((j for j in range(i + 1, len(events))
                      if j not in used and events[j].kind == "receive"
                      and (events[j].sender, events[j].receiver, events[j].message)
                      == (e.sender, e.receiver, e.message)), None)
            if j is None:
                rows.append((str(e.sender), f"I_{e.receiver}", "send", e.message))
            else:
                used.add(j)
                rows.append((str(e.sender), str(e.receiver), "both", e.message))
        elif i not in used:
            rows.append((f"I_{e.sender}", str(e.receiver), "receive", e.message))
    return rows


def narration_lines(events) -> list[str]:
    return [f"{i:02d} - {a} -> {b} : {m}"
            for i, (a, b, _, m) in enumerate(narrate(events), start=1)]
