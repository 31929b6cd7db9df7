"""Symbolic and concrete terms under associative pairing.

One term algebra serves both worlds: a term is *symbolic* when it mentions
variables (``AgentVar``, ``NonceVar``, ``KeyVar``) and *concrete* (ground)
when it only mentions values (``Agent``, ``Nonce``, ``ShortKey``).  Key
constructors, tuples and encryptions are shared.

Terms are immutable and hashable.  Every term carries a total-order key so
that sets of terms can be rendered and compared deterministically.
"""
from __future__ import annotations

from typing import Iterable, Iterator, Mapping

__all__ = [
    "Term", "Var", "AgentVar", "NonceVar", "KeyVar", "Constant",
    "Agent", "Nonce", "ShortKey", "PubKey", "PrivKey", "SharedKey",
    "Tup", "Enc", "INTRUDER", "MalformedTerm", "UnboundComponent",
    "tup", "elements", "canonicalize", "is_canonical", "subterms",
    "variables", "encryption_depth", "apply_valuation", "evaluate",
    "is_key", "is_ground", "key_type", "sort_of", "enc_subterms",
]


class MalformedTerm(ValueError):
    pass


class UnboundComponent(KeyError):
    def __init__(self, component: Term):
        super().__init__(f"no value for component {component}")
        self.component = component


class Term:
    """Base class.  Subclasses set ``_key`` (a unique nested tuple)."""

    __slots__ = ("_key", "_hash")

    def _seal(self, key: tuple) -> None:
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __eq__(self, other):
        if self is other:
            return True
        return isinstance(other, Term) and self._key == other._key

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return self._hash

    def __lt__(self, other: Term) -> bool:
        return self._key < other._key

    def __le__(self, other: Term) -> bool:
        return self._key <= other._key

    @property
    def sort_key(self) -> tuple:
        return self._key

    def __repr__(self):
        return f"{type(self).__name__}({self})"

    def children(self) -> tuple[Term, ...]:
        return ()


# ---------------------------------------------------------------------------
# atoms

class Var(Term):
    __slots__ = ("name",)
    _rank = 0
    sort = "?"

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._seal((self._rank, name))

    def __str__(self):
        return self.name


class AgentVar(Var):
    __slots__ = ()
    _rank = 0
    sort = "agent"


class NonceVar(Var):
    __slots__ = ()
    _rank = 1
    sort = "nonce"


class KeyVar(Var):
    """Short-term (session) key variable."""
    __slots__ = ()
    _rank = 2
    sort = "key"


class Constant(Term):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._seal((3, name))

    def __str__(self):
        return self.name


class Agent(Term):
    __slots__ = ("name",)
    sort = "agent"

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._seal((4, name))

    def __str__(self):
        return self.name


INTRUDER = Agent("I")


class Nonce(Term):
    __slots__ = ("n",)
    sort = "nonce"

    def __init__(self, n: int):
        object.__setattr__(self, "n", int(n))
        self._seal((5, self.n))

    def __str__(self):
        return f"n{self.n}"


class ShortKey(Term):
    __slots__ = ("n",)
    sort = "key"

    def __init__(self, n: int):
        object.__setattr__(self, "n", int(n))
        self._seal((6, self.n))

    def __str__(self):
        return f"k{self.n}"


# ---------------------------------------------------------------------------
# long-term key constructors

def _agent_arg(t: Term) -> Term:
    if not isinstance(t, (AgentVar, Agent)):
        raise MalformedTerm(f"key constructor expects an agent, got {t!r}")
    return t


class PubKey(Term):
    __slots__ = ("agent",)

    def __init__(self, agent: Term):
        object.__setattr__(self, "agent", _agent_arg(agent))
        self._seal((7, agent._key))

    def __str__(self):
        return f"pk({self.agent})"

    def children(self):
        return (self.agent,)


class PrivKey(Term):
    __slots__ = ("agent",)

    def __init__(self, agent: Term):
        object.__setattr__(self, "agent", _agent_arg(agent))
        self._seal((8, agent._key))

    def __str__(self):
        return f"sk({self.agent})"

    def children(self):
        return (self.agent,)


class SharedKey(Term):
    """Long-term symmetric key.  Unordered: shk(A,B) == shk(B,A)."""
    __slots__ = ("a", "b")

    def __init__(self, a: Term, b: Term):
        a, b = sorted((_agent_arg(a), _agent_arg(b)))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        self._seal((9, a._key, b._key))

    def __str__(self):
        return f"shk({self.a},{self.b})"

    def children(self):
        return (self.a, self.b)

    def other(self, agent: Term) -> Term | None:
        if self.a == agent:
            return self.b
        if self.b == agent:
            return self.a
        return None


# ---------------------------------------------------------------------------
# composite terms

class Tup(Term):
    """n-ary pairing.  The constructor does not flatten; use ``tup``."""
    __slots__ = ("items",)

    def __init__(self, items: Iterable[Term]):
        items = tuple(items)
        object.__setattr__(self, "items", items)
        self._seal((10, tuple(t._key for t in items)))

    def __str__(self):
        return ",".join(_str_elem(t) for t in self.items)

    def __len__(self):
        return len(self.items)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.items)

    def children(self):
        return self.items


def _str_elem(t: Term) -> str:
    # a nested tuple only exists in raw (non-canonical) trees
    return f"({t})" if isinstance(t, Tup) else str(t)


_KEY_TYPES = (KeyVar, ShortKey, PubKey, PrivKey, SharedKey, Constant)


def is_key(t: Term) -> bool:
    return isinstance(t, _KEY_TYPES)


class Enc(Term):
    __slots__ = ("body", "key")

    def __init__(self, body: Term, key: Term):
        if not is_key(key):
            raise MalformedTerm(f"encryption key must be key-sorted, got {key}")
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "key", key)
        self._seal((11, body._key, key._key))

    def __str__(self):
        return "{" + str(self.body) + "}" + str(self.key)

    def children(self):
        return (self.body, self.key)


# ---------------------------------------------------------------------------
# canonical form

def elements(t: Term) -> tuple[Term, ...]:
    """Top-level elements of a canonical term (a non-tuple is one element)."""
    return t.items if isinstance(t, Tup) else (t,)


def tup(*items: Term) -> Term:
    """Canonical n-ary pairing of already-canonical items."""
    flat: list[Term] = []
    for item in items:
        flat.extend(elements(item))
    if not flat:
        raise MalformedTerm("empty tuple")
    if len(flat) == 1:
        return flat[0]
    return Tup(flat)


def canonicalize(t: Term) -> Term:
    """Flatten nested pairing everywhere and drop singleton tuples."""
    if isinstance(t, Tup):
        return tup(*(canonicalize(x) for x in t.items))
    if isinstance(t, Enc):
        return Enc(canonicalize(t.body), t.key)
    return t


def is_canonical(t: Term) -> bool:
    if isinstance(t, Tup):
        if len(t.items) < 2:
            return False
        return all(not isinstance(x, Tup) and is_canonical(x) for x in t.items)
    if isinstance(t, Enc):
        return is_canonical(t.body)
    return True


# ---------------------------------------------------------------------------
# structural utilities

def subterms(t: Term) -> set[Term]:
    out: set[Term] = set()
    stack = [t]
    while stack:
        x = stack.pop()
        if x in out:
            continue
        out.add(x)
        stack.extend(x.children())
    return out


def variables(t: Term) -> set[Var]:
    return {x for x in subterms(t) if isinstance(x, Var)}


def enc_subterms(t: Term) -> list[Enc]:
    """Encrypted subterms in post-order (innermost first), without repeats."""
    seen: set[Term] = set()
    out: list[Enc] = []

    def walk(x: Term) -> None:
        for c in x.children():
            walk(c)
        if isinstance(x, Enc) and x not in seen:
            seen.add(x)
            out.append(x)

    walk(t)
    return out


def encryption_depth(t: Term) -> int:
    if isinstance(t, Enc):
        return 1 + max(encryption_depth(t.body), encryption_depth(t.key))
    kids = t.children()
    return max((encryption_depth(c) for c in kids), default=0)


def is_ground(t: Term) -> bool:
    return not any(isinstance(x, Var) for x in subterms(t))


def key_type(k: Term) -> str:
    """Key family used by the well-composedness and padding rules."""
    if isinstance(k, PubKey):
        return "public"
    if isinstance(k, PrivKey):
        return "private"
    if isinstance(k, SharedKey):
        return "symmetric"
    if isinstance(k, (KeyVar, ShortKey)):
        return "short"
    if isinstance(k, Constant):
        return "constant"
    raise MalformedTerm(f"not a key: {k}")


def sort_of(t: Term) -> str:
    """Value sort: agent, nonce, key, cypher, longterm, constant or tuple."""
    if isinstance(t, (Agent, AgentVar)):
        return "agent"
    if isinstance(t, (Nonce, NonceVar)):
        return "nonce"
    if isinstance(t, (ShortKey, KeyVar)):
        return "key"
    if isinstance(t, Enc):
        return "cypher"
    if isinstance(t, (PubKey, PrivKey, SharedKey)):
        return "longterm"
    if isinstance(t, Constant):
        return "constant"
    return "tuple"


# ---------------------------------------------------------------------------
# valuations

def evaluate(t: Term, v: Mapping[Term, Term]) -> Term | None:
    """Like ``apply_valuation`` but returns None instead of raising."""
    try:
        return apply_valuation(t, v)
    except UnboundComponent:
        return None


def apply_valuation(t: Term, v: Mapping[Term, Term]) -> Term:
    """Substitute maximal components of ``t`` found in ``v``.

    Lookup happens before decomposition, so an encrypted template bound to an
    opaque cypher is replaced as a whole.  Constants and agent values map to
    themselves; key constructors are rebuilt from their agent arguments.
    """
    hit = v.get(t)
    if hit is not None:
        return hit
    if isinstance(t, Tup):
        return tup(*(apply_valuation(x, v) for x in t.items))
    if isinstance(t, Enc):
        return Enc(apply_valuation(t.body, v), apply_valuation(t.key, v))
    if isinstance(t, PubKey):
        return PubKey(apply_valuation(t.agent, v))
    if isinstance(t, PrivKey):
        return PrivKey(apply_valuation(t.agent, v))
    if isinstance(t, SharedKey):
        return SharedKey(apply_valuation(t.a, v), apply_valuation(t.b, v))
    if isinstance(t, (Constant, Agent, Nonce, ShortKey)):
        return t
    raise UnboundComponent(t)
