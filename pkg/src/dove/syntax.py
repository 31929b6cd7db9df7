"""Line-oriented protocol files.

::

    protocol TMN
    roles A B S
    keys Ka Kb
    init A: S, pk(S)
    1. A -> S : B, {Ka}pk(S)
    secret Kb from B

Terms use ``{body}key`` for encryption, ``pk(A)``, ``sk(A)``, ``shk(A,B)``
for long-term keys, commas for pairing and parentheses for grouping.
``#`` starts a comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

from .protocol import (
    MessageTemplate, ProtocolError, ProtocolTemplate, UndeclaredVariable,
)
from .term import (
    Agent, AgentVar, Constant, Enc, KeyVar, MalformedTerm, NonceVar, PrivKey,
    PubKey, SharedKey, Term, Tup, tup,
)

__all__ = [
    "ParseError", "DuplicateDeclaration", "parse_spec", "parse_term",
    "render_spec", "render_term", "load_spec",
]


class ParseError(ProtocolError):
    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        where = f"{line}:{col}"
        msg = f"{where}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.line, self.col, self.expected = line, col, expected


class DuplicateDeclaration(ParseError):
    def __init__(self, line: int, col: int, name: str):
        ProtocolError.__init__(self, f"{line}:{col}: duplicate declaration of {name}")
        self.line, self.col, self.expected = line, col, name


_TOKEN = re.compile(r"\s*(?:(?P<id>[A-Za-z][A-Za-z0-9_]*)|(?P<arrow>->)|(?P<p>[{}(),:.]))")
_KEY_FUNCS = {"pk", "sk", "shk"}
_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, offset: int = 0) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            col = offset + len(text[:pos]) + (len(text[pos:]) - len(text[pos:].lstrip())) + 1
            raise ParseError(line, col, "term", text[pos:].strip()[:1])
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), offset + start + 1))
        pos = m.end()
    return toks


class _TermParser:
    def __init__(self, toks: list[_Tok], line: int, resolve: Callable[[str, int], Term],
                 end_col: int):
        self.toks, self.i, self.line = toks, 0, line
        self.resolve = resolve
        self.end_col = end_col

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t is None or t.text != text:
            self.fail(repr(text))
        self.i += 1
        return t

    def fail(self, expected: str):
        t = self.peek()
        if t is None:
            raise ParseError(self.line, self.end_col, expected, "end of line")
        raise ParseError(self.line, t.col, expected, t.text)

    def term(self) -> Term:
        items = [self.elem()]
        while self.peek() is not None and self.peek().text == ",":
            self.i += 1
            items.append(self.elem())
        return tup(*items)

    def elem(self) -> Term:
        t = self.peek()
        if t is None:
            self.fail("term")
        if t.text == "{":
            self.i += 1
            body = self.term()
            self.expect("}")
            key_tok = self.peek()
            key = self.atom()
            try:
                return Enc(body, key)
            except MalformedTerm:
                raise ParseError(self.line, key_tok.col, "encryption key", str(key)) from None
        if t.text == "(":
            self.i += 1
            inner = self.term()
            self.expect(")")
            return inner
        return self.atom()

    def atom(self) -> Term:
        t = self.peek()
        if t is None or t.kind != "id":
            self.fail("identifier")
        self.i += 1
        nxt = self.peek()
        if t.text in _KEY_FUNCS and nxt is not None and nxt.text == "(":
            self.i += 1
            args = [self.agent_arg()]
            while self.peek() is not None and self.peek().text == ",":
                self.i += 1
                args.append(self.agent_arg())
            self.expect(")")
            want = 2 if t.text == "shk" else 1
            if len(args) != want:
                raise ParseError(self.line, t.col, f"{want} argument(s) to {t.text}")
            if t.text == "pk":
                return PubKey(args[0])
            if t.text == "sk":
                return PrivKey(args[0])
            return SharedKey(*args)
        return self.resolve(t.text, t.col)

    def agent_arg(self) -> Term:
        t = self.peek()
        if t is None or t.kind != "id":
            self.fail("agent")
        self.i += 1
        x = self.resolve(t.text, t.col)
        if not isinstance(x, (AgentVar, Agent)):
            raise ParseError(self.line, t.col, "agent", t.text)
        return x

    def done(self):
        if self.peek() is not None:
            self.fail("end of term")


def _parse_terms(text: str, line: int, offset: int, resolve) -> list[Term]:
    toks = _tokenize(text, line, offset)
    if not toks:
        return []
    p = _TermParser(toks, line, resolve, offset + len(text.rstrip()) + 1)
    items = [p.elem()]
    while p.peek() is not None and p.peek().text == ",":
        p.i += 1
        items.append(p.elem())
    p.done()
    return items


def parse_term(text: str, scope: dict[str, Term] | None = None, *,
               concrete: bool = False) -> Term:
    """Parse one term.  Unknown identifiers become agent values when
    ``concrete`` is set, otherwise they raise UndeclaredVariable."""
    scope = scope or {}

    def resolve(name: str, col: int) -> Term:
        if name in scope:
            return scope[name]
        if concrete:
            return Agent(name)
        raise UndeclaredVariable(f"1:{col}: undeclared identifier {name}")

    items = _parse_terms(text, 1, 0, resolve)
    if not items:
        raise ParseError(1, 1, "term", "end of line")
    return tup(*items)


_MSG = re.compile(r"^\s*(\d+)\s*\.\s*(.*)$")
_DECL = {"roles": AgentVar, "nonces": NonceVar, "keys": KeyVar, "consts": Constant}


def parse_spec(text: str) -> ProtocolTemplate:
    lines = []
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if body.strip():
            lines.append((n, body))

    name = None
    decl: dict[str, list] = {k: [] for k in _DECL}
    scope: dict[str, Term] = {}
    rest = []
    for n, body in lines:
        word = body.split(None, 1)[0]
        indent = len(body) - len(body.lstrip())
        if word == "protocol":
            parts = body.split()
            if len(parts) != 2 or not _IDENT.match(parts[1]):
                raise ParseError(n, indent + 1, "protocol NAME")
            if name is not None:
                raise DuplicateDeclaration(n, indent + 1, "protocol")
            name = parts[1]
        elif word in _DECL:
            for m in re.finditer(r"\S+", body[indent + len(word):]):
                ident = m.group(0)
                c = indent + len(word) + m.start() + 1
                if not _IDENT.match(ident) or ident in {"I", *_KEY_FUNCS}:
                    raise ParseError(n, c, "identifier", ident)
                if ident in scope:
                    raise DuplicateDeclaration(n, c, ident)
                scope[ident] = _DECL[word](ident)
                decl[word].append(scope[ident])
        else:
            rest.append((n, body))
    if name is None:
        raise ParseError(lines[0][0] if lines else 1, 1, "'protocol NAME'")

    def symbolic(line: int):
        def resolve(ident: str, col: int) -> Term:
            if ident in scope:
                return scope[ident]
            raise UndeclaredVariable(f"{line}:{col}: undeclared identifier {ident}")
        return resolve

    def concrete(line: int):
        def resolve(ident: str, col: int) -> Term:
            if ident in scope and isinstance(scope[ident], Constant):
                return scope[ident]
            return Agent(ident)
        return resolve

    messages: list[MessageTemplate] = []
    init: dict[AgentVar, frozenset] = {}
    intruder: set[Term] = set()
    secrets = []
    for n, body in rest:
        stripped = body.strip()
        indent = len(body) - len(body.lstrip())
        word = stripped.split(None, 1)[0].rstrip(":")
        m = _MSG.match(body)
        if m:
            idx = int(m.group(1))
            head, sep, content = m.group(2).partition(":")
            if not sep:
                raise ParseError(n, len(body) + 1, "':' before message content")
            hm = re.fullmatch(r"\s*(\S+)\s*->\s*(\S+)\s*", head)
            if not hm:
                raise ParseError(n, m.start(2) + 1, "SENDER -> RECEIVER")
            roles = []
            for g in (1, 2):
                ident = hm.group(g)
                x = scope.get(ident)
                if not isinstance(x, AgentVar):
                    if x is None:
                        raise UndeclaredVariable(
                            f"{n}:{m.start(2) + hm.start(g) + 1}: undeclared role {ident}")
                    raise ParseError(n, m.start(2) + hm.start(g) + 1, "role", ident)
                roles.append(x)
            offset = m.start(2) + len(head) + 1
            items = _parse_terms(content, n, offset, symbolic(n))
            if not items:
                raise ParseError(n, len(body) + 1, "message content")
            if idx != len(messages) + 1:
                raise ParseError(n, indent + 1, f"message index {len(messages) + 1}", str(idx))
            messages.append(MessageTemplate(idx, roles[0], roles[1], tup(*items)))
        elif word == "init":
            head, sep, terms = stripped.partition(":")
            parts = head.split()
            if not sep or len(parts) != 2:
                raise ParseError(n, indent + 1, "init ROLE: terms")
            role = scope.get(parts[1])
            if not isinstance(role, AgentVar):
                raise ParseError(n, indent + 6, "role", parts[1])
            if role in init:
                raise DuplicateDeclaration(n, indent + 1, f"init {role}")
            offset = indent + len(head) + 1
            init[role] = frozenset(_parse_terms(terms, n, offset, symbolic(n)))
        elif word == "intruder":
            head, sep, terms = stripped.partition(":")
            if not sep:
                raise ParseError(n, indent + len(head) + 1, "':'")
            offset = indent + len(head) + 1
            intruder |= set(_parse_terms(terms, n, offset, concrete(n)))
        elif word == "secret":
            parts = stripped.split()
            if len(parts) not in (2, 4) or (len(parts) == 4 and parts[2] != "from"):
                raise ParseError(n, indent + 1, "secret X [from ROLE]")
            var = scope.get(parts[1])
            if not isinstance(var, (NonceVar, KeyVar)):
                if var is None:
                    raise UndeclaredVariable(f"{n}:{indent + 8}: undeclared {parts[1]}")
                raise ParseError(n, indent + 8, "nonce or key variable", parts[1])
            view = None
            if len(parts) == 4:
                view = scope.get(parts[3])
                if not isinstance(view, AgentVar):
                    raise ParseError(n, len(body) - len(parts[3]) + 1, "role", parts[3])
            secrets.append((var, view))
        else:
            raise ParseError(n, indent + 1, "declaration, message or goal", word)

    return ProtocolTemplate(
        name=name,
        roles=tuple(decl["roles"]),
        nonces=tuple(decl["nonces"]),
        keys=tuple(decl["keys"]),
        consts=tuple(decl["consts"]),
        messages=tuple(messages),
        init=init,
        intruder=frozenset(intruder),
        secrets=tuple(secrets),
    )


def load_spec(path) -> ProtocolTemplate:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def render_term(t: Term) -> str:
    if isinstance(t, Tup):
        return ", ".join(render_term(x) for x in t.items)
    if isinstance(t, Enc):
        return "{" + render_term(t.body) + "}" + str(t.key)
    return str(t)


def _terms(ts) -> str:
    return ", ".join(render_term(t) for t in sorted(ts))


def render_spec(p: ProtocolTemplate) -> str:
    out = [f"protocol {p.name}"]
    for word, items in (("roles", p.roles), ("nonces", p.nonces),
                        ("keys", p.keys), ("consts", p.consts)):
        if items:
            out.append(word + " " + " ".join(str(x) for x in items))
    for role in p.roles:
        if role in p.init:
            terms = _terms(p.init[role])
            out.append(f"init {role}:" + (" " + terms if terms else ""))
    if p.intruder:
        out.append("intruder: " + _terms(p.intruder))
    for m in p.messages:
        out.append(f"{m.index}. {m.sender} -> {m.receiver} : {render_term(m.content)}")
    for var, view in p.secrets:
        out.append(f"secret {var}" + (f" from {view}" if view is not None else ""))
    return "\n".join(out) + "\n"
