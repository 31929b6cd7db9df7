"""Protocol templates, role sessions and the realizability check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .deduction import KnowledgeSet, analyze, can_synthesize, missing_component
from .term import (
    AgentVar, Constant, KeyVar, NonceVar, PrivKey, PubKey, SharedKey, Term,
    Var, subterms, variables,
)

__all__ = [
    "ProtocolError", "UnknownRole", "UndeclaredVariable", "NotRealizable",
    "MessageTemplate", "ProtocolTemplate", "Failure", "RealizabilityReport",
    "project_session", "new_vars", "initial_knowledge", "check_realizable",
    "revealed_vars", "knowledge_rows",
]


class ProtocolError(ValueError):
    pass


class UnknownRole(ProtocolError):
    pass


class UndeclaredVariable(ProtocolError):
    pass


class NotRealizable(ProtocolError):
    pass


@dataclass(frozen=True)
class MessageTemplate:
    index: int
    sender: AgentVar
    receiver: AgentVar
    content: Term

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ProtocolError(
                f"message {self.index}: sender and receiver must differ ({self.sender})")

    def involves(self, role: AgentVar) -> bool:
        return role in (self.sender, self.receiver)

    def __str__(self):
        return f"{self.index}. {self.sender} -> {self.receiver} : {self.content}"


@dataclass(frozen=True, eq=True)
class ProtocolTemplate:
    name: str
    roles: tuple[AgentVar, ...]
    nonces: tuple[NonceVar, ...] = ()
    keys: tuple[KeyVar, ...] = ()
    consts: tuple[Constant, ...] = ()
    messages: tuple[MessageTemplate, ...] = ()
    # explicit initial knowledge per role; roles absent here get the default
    init: Mapping[AgentVar, frozenset] = field(default_factory=dict)
    intruder: frozenset = frozenset()
    secrets: tuple[tuple[Var, AgentVar | None], ...] = ()

    def __post_init__(self):
        declared = set(self.roles) | set(self.nonces) | set(self.keys) | set(self.consts)
        for m in self.messages:
            for r in (m.sender, m.receiver):
                if r not in self.roles:
                    raise UndeclaredVariable(f"message {m.index}: undeclared role {r}")
            for x in subterms(m.content):
                if isinstance(x, (Var, Constant)) and x not in declared:
                    raise UndeclaredVariable(f"message {m.index}: undeclared {x}")
        for role, terms in self.init.items():
            if role not in self.roles:
                raise UnknownRole(f"init for unknown role {role}")
            for t in terms:
                for x in subterms(t):
                    if isinstance(x, (Var, Constant)) and x not in declared:
                        raise UndeclaredVariable(f"init {role}: undeclared {x}")
        for var, view in self.secrets:
            if var not in declared:
                raise UndeclaredVariable(f"secret: undeclared {var}")
            if view is not None and view not in self.roles:
                raise UnknownRole(f"secret viewpoint {view} is not a role")

    @property
    def variables(self) -> set[Var]:
        return set(self.roles) | set(self.nonces) | set(self.keys)

    def role(self, name: str) -> AgentVar:
        for r in self.roles:
            if r.name == name:
                return r
        raise UnknownRole(name)

    def lookup(self, name: str) -> Term:
        for t in (*self.roles, *self.nonces, *self.keys, *self.consts):
            if t.name == name:
                return t
        raise UndeclaredVariable(name)


def project_session(p: ProtocolTemplate, role: AgentVar) -> list[MessageTemplate]:
    if role not in p.roles:
        raise UnknownRole(str(role))
    return [m for m in p.messages if m.involves(role)]


def new_vars(p: ProtocolTemplate) -> list[frozenset]:
    seen: set[Var] = set()
    out = []
    for m in p.messages:
        fresh = frozenset(variables(m.content) - seen)
        seen |= fresh
        out.append(fresh)
    return out


def initial_knowledge(p: ProtocolTemplate, role: AgentVar) -> frozenset:
    """Kn_{role,0}.  A role always knows its own name."""
    if role in p.init:
        return frozenset(p.init[role]) | {role}
    kn: set[Term] = set(p.roles)
    kn |= {PubKey(r) for r in p.roles}
    kn.add(PrivKey(role))
    for m in p.messages:
        for x in subterms(m.content):
            if isinstance(x, SharedKey) and x.other(role) is not None:
                kn.add(x)
    return frozenset(kn)


@dataclass(frozen=True)
class Failure:
    role: AgentVar
    index: int
    missing: Term

    def __str__(self):
        return f"role {self.role} cannot build message {self.index}: missing {self.missing}"


@dataclass
class RealizabilityReport:
    protocol: ProtocolTemplate
    failure: Failure | None
    sessions: dict[AgentVar, list[MessageTemplate]]
    table: dict[AgentVar, list[KnowledgeSet]]

    @property
    def realizable(self) -> bool:
        return self.failure is None

    def knowledge(self, role: AgentVar, step: int) -> KnowledgeSet:
        return self.table[role][step]

    def delta(self, role: AgentVar, step: int) -> tuple[frozenset, frozenset]:
        """(basic, crypto) additions of ``role`` at session step ``step`` >= 1."""
        rows = self.table[role]
        before, after = rows[step - 1], rows[step]
        return after.basic - before.basic, after.crypto - before.crypto

    def by_message(self, role: AgentVar) -> dict[int, frozenset]:
        """Basic-knowledge additions keyed by protocol message index."""
        out = {}
        for j, m in enumerate(self.sessions[role], start=1):
            out[m.index] = self.delta(role, j)[0]
        return out


def knowledge_rows(p: ProtocolTemplate, role: AgentVar,
                   newvars: list[frozenset] | None = None):
    """Kn_{role,0..k} and the first failing send (or None)."""
    if newvars is None:
        newvars = new_vars(p)
    kn = analyze(role, initial_knowledge(p, role))
    rows = [kn]
    failure = None
    for m in project_session(p, role):
        nv = newvars[m.index - 1]
        if m.sender == role:
            peer = m.receiver
            if failure is None and not can_synthesize(role, kn.terms | nv, m.content):
                miss = missing_component(role, kn.terms | nv, m.content)
                failure = Failure(role, m.index, miss)
            # the sender learns nothing it did not build; fresh values join
            kn = analyze(role, kn.terms | {peer} | nv)
        else:
            peer = m.sender
            kn = analyze(role, kn.terms | {peer, m.content})
        rows.append(kn)
    return rows, failure


def check_realizable(p: ProtocolTemplate) -> RealizabilityReport:
    nv = new_vars(p)
    table, sessions, failures = {}, {}, []
    for role in p.roles:
        rows, failure = knowledge_rows(p, role, nv)
        table[role] = rows
        sessions[role] = project_session(p, role)
        if failure is not None:
            failures.append(failure)
    failure = min(failures, key=lambda f: (f.index, p.roles.index(f.role)), default=None)
    return RealizabilityReport(p, failure, sessions, table)


OBSERVER_NAME = "C"


def revealed_vars(p: ProtocolTemplate) -> tuple[frozenset, frozenset]:
    """(revealed, unrevealed) nonce and short-key variables.

    A passive observer that is not a role and knows every agent name analyses
    the set of all message contents.
    """
    name = OBSERVER_NAME
    taken = {r.name for r in p.roles}
    while name in taken:
        name += "_"
    observer = AgentVar(name)
    kn = analyze(observer, [m.content for m in p.messages], agents_known=True)
    secrets = set(p.nonces) | set(p.keys)
    revealed = frozenset(x for x in secrets if x in kn.basic)
    return revealed, frozenset(secrets - revealed)
