"""Well-composedness, the class of hardenable protocols, and the hardening
transformation.

A *signature* is a session nonce followed by every role in declaration
order.  A hardened protocol carries it in clear, signs every message with
the sender's private key, puts it at the head of every encrypted body, and
separates encrypted bodies of one key family by their element counts
(padding with copies of the last role) or by distinct tag constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .protocol import (
    MessageTemplate, NotRealizable, ProtocolError, ProtocolTemplate,
    check_realizable,
)
from .term import (
    AgentVar, Constant, Enc, NonceVar, PrivKey, SharedKey, Term, Tup,
    elements, encryption_depth, enc_subterms, key_type, tup,
)

__all__ = [
    "Condition", "WellComposedReport", "ClassCReport", "HardenOptions",
    "NotInClassC", "signature", "check_well_composed", "in_class_c",
    "harden", "weakly_equivalent", "equal_modulo_padding",
]


class NotInClassC(ProtocolError):
    def __init__(self, witnesses):
        self.witnesses = list(witnesses)
        super().__init__("not in the hardenable class: " + "; ".join(self.witnesses))


@dataclass
class Condition:
    number: int
    title: str
    passed: bool
    witnesses: list[str] = field(default_factory=list)


@dataclass
class WellComposedReport:
    conditions: list[Condition]
    signature: Term | None = None
    counts: dict[str, list[int]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> list[int]:
        return [c.number for c in self.conditions if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.conditions:
            out.append(f"condition {c.number} ({c.title}): {'pass' if c.passed else 'FAIL'}")
            out += [f"  - {w}" for w in c.witnesses]
        if self.signature is not None:
            out.append(f"signature: <{self.signature}>")
        for kt, ns in sorted(self.counts.items()):
            out.append(f"element counts under {kt} keys: {'/'.join(map(str, ns))}")
        out.append("well composed" if self.passed else "not well composed")
        return out

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "conditions": [{"number": c.number, "title": c.title, "passed": c.passed,
                                "witnesses": c.witnesses} for c in self.conditions],
                "signature": None if self.signature is None else str(self.signature),
                "counts": self.counts}


# ---------------------------------------------------------------------------
# helpers

def _transmitted(t: Term):
    """Subterms in data position (everything except encryption keys)."""
    yield t
    if isinstance(t, Tup):
        for x in t.items:
            yield from _transmitted(x)
    elif isinstance(t, Enc):
        yield from _transmitted(t.body)


def _all_encs(p: ProtocolTemplate) -> list[tuple[int, Enc]]:
    out, seen = [], set()
    for m in p.messages:
        for e in enc_subterms(m.content):
            if e not in seen:
                seen.add(e)
                out.append((m.index, e))
    return out


def signature(p: ProtocolTemplate, nonce: NonceVar) -> tuple[Term, ...]:
    return (nonce, *p.roles)


def _starts_with(t: Term, prefix: tuple) -> bool:
    items = elements(t)
    return items[:len(prefix)] == prefix


# ---------------------------------------------------------------------------
# well-composedness

def _cond1(p) -> Condition:
    bad = []
    for m in p.messages:
        d = encryption_depth(m.content)
        if d > 2:
            deepest = max(enc_subterms(m.content), key=encryption_depth)
            bad.append(f"message {m.index}: {deepest} has depth {d}")
    return Condition(1, "encryption depth at most two", not bad, bad)


def _cond2(p) -> Condition:
    bad = []
    for m in p.messages:
        for x in _transmitted(m.content):
            if isinstance(x, (PrivKey, SharedKey)):
                bad.append(f"message {m.index} transmits {x}")
    return Condition(2, "no long-term private or shared key transmitted", not bad, bad)


def _signature_witnesses(p, nonce) -> list[str]:
    sig = signature(p, nonce)
    n = len(sig)
    bad = []
    for m in p.messages:
        items = elements(m.content)
        ok = (len(items) == n + 1 and items[:n] == sig and isinstance(items[n], Enc)
              and items[n].key == PrivKey(m.sender) and _starts_with(items[n].body, sig))
        if not ok:
            bad.append(f"message {m.index} is not <S,{{S,m}}sk({m.sender})>: {m.content}")
    for idx, e in _all_encs(p):
        if not _starts_with(e.body, sig):
            bad.append(f"message {idx}: {e} lacks the signature at the head")
    return bad


def _cond3(p) -> tuple[Condition, Term | None]:
    if not p.messages:
        return Condition(3, "signature form", True), None
    if not p.nonces:
        return Condition(3, "signature form", False,
                         ["no nonce variable to serve as session nonce"]), None
    first = None
    for nonce in p.nonces:
        bad = _signature_witnesses(p, nonce)
        if not bad:
            return Condition(3, "signature form", True), tup(*signature(p, nonce))
        if first is None:
            first = bad
    first.append("no signature found under the declared role order")
    return Condition(3, "signature form", False, first), None


def _tag_of(e: Enc, sig_len: int) -> Term | None:
    items = elements(e.body)
    if sig_len and len(items) > sig_len and isinstance(items[sig_len], Constant):
        return items[sig_len]
    return None


def _cond4(p, sig: Term | None) -> tuple[Condition, dict]:
    sig_len = len(elements(sig)) if sig is not None else 0
    groups: dict[str, list[tuple[int, Enc]]] = {}
    for idx, e in _all_encs(p):
        groups.setdefault(key_type(e.key), []).append((idx, e))
    bad = []
    counts = {}
    for kt, encs in groups.items():
        counts[kt] = [len(elements(e.body)) for _, e in encs]
        for i, (ia, a) in enumerate(encs):
            for ib, b in encs[i + 1:]:
                if len(elements(a.body)) != len(elements(b.body)):
                    continue
                ta, tb = _tag_of(a, sig_len), _tag_of(b, sig_len)
                if ta is not None and tb is not None and ta != tb:
                    continue
                same = "same key" if a.key == b.key else "different keys"
                n = len(elements(a.body))
                noun = "element" if n == 1 else "elements"
                bad.append(f"{a} (message {ia}) and {b} (message {ib}): {kt} keys, "
                           f"{n} {noun} each, {same}")
    return Condition(4, "distinct element counts per key type", not bad, bad), counts


def check_well_composed(p: ProtocolTemplate) -> WellComposedReport:
    c3, sig = _cond3(p)
    c4, counts = _cond4(p, sig)
    return WellComposedReport([_cond1(p), _cond2(p), c3, c4], sig, counts)


# ---------------------------------------------------------------------------
# class C

@dataclass
class ClassCReport:
    witnesses: list[str]

    @property
    def passed(self) -> bool:
        return not self.witnesses


def in_class_c(p: ProtocolTemplate) -> ClassCReport:
    bad = []
    for m in p.messages:
        d = encryption_depth(m.content)
        if d > 2:
            bad.append(f"message {m.index}: encryption depth {d}")
        for e in enc_subterms(m.content):
            if encryption_depth(e) == 2 and e.key != PrivKey(m.sender):
                bad.append(f"message {m.index}: depth-two term {e} is not under sk({m.sender})")
        for x in _transmitted(m.content):
            if isinstance(x, (PrivKey, SharedKey)):
                bad.append(f"message {m.index} transmits {x}")
    return ClassCReport(bad)


# ---------------------------------------------------------------------------
# hardening

@dataclass(frozen=True)
class HardenOptions:
    tag_style: str = "role-padding"      # or "int"

    def __post_init__(self):
        if self.tag_style not in ("role-padding", "int"):
            raise ValueError(f"unknown tag style {self.tag_style!r}")


def _fresh_name(p: ProtocolTemplate, base: str) -> str:
    taken = {x.name for x in (*p.roles, *p.nonces, *p.keys, *p.consts)}
    name = base
    while name in taken:
        name += "_"
    return name


def _wrap(m: MessageTemplate) -> Enc:
    """Sign the content, merging flat signatures by the sender."""
    own = PrivKey(m.sender)
    items = []
    for x in elements(m.content):
        if isinstance(x, Enc) and x.key == own:
            if encryption_depth(x) > 1:
                raise NotInClassC([f"message {m.index}: signed term {x} already nests "
                                   "an encryption and cannot be signed again"])
            items.extend(elements(x.body))
        else:
            items.append(x)
    return Enc(tup(*items), own)


class _Hardener:
    def __init__(self, p: ProtocolTemplate, opts: HardenOptions):
        self.p = p
        self.opts = opts
        self.nonce = NonceVar(_fresh_name(p, "N"))
        self.sig = (self.nonce, *p.roles)
        self.pad = p.roles[-1]
        self.used: dict[str, set[int]] = {}
        self.tags: list[Constant] = []
        self.memo: dict[Term, Term] = {}

    def term(self, t: Term) -> Term:
        if isinstance(t, Tup):
            return tup(*(self.term(x) for x in t.items))
        if isinstance(t, Enc):
            done = self.memo.get(t)
            if done is None:
                done = self.memo[t] = self.encrypt(self.term(t.body), t.key)
            return done
        return t

    def encrypt(self, body: Term, key: Term) -> Enc:
        rest = elements(body)
        if self.opts.tag_style == "int":
            tag = Constant(_fresh_name(self.p, f"tag{len(self.tags) + 1}"))
            self.tags.append(tag)
            return Enc(tup(*self.sig, tag, *rest), key)
        used = self.used.setdefault(key_type(key), set())
        n = len(self.sig) + len(rest)
        pads = 0
        while n + pads in used:
            pads += 1
        used.add(n + pads)
        return Enc(tup(*self.sig, *([self.pad] * pads), *rest), key)

    def run(self) -> ProtocolTemplate:
        msgs = []
        for m in self.p.messages:
            signed = self.term(_wrap(m))
            msgs.append(MessageTemplate(m.index, m.sender, m.receiver, tup(*self.sig, signed)))
        return replace(self.p, name=self.p.name + "_wc",
                       nonces=(*self.p.nonces, self.nonce),
                       consts=(*self.p.consts, *self.tags),
                       messages=tuple(msgs))


def harden(p: ProtocolTemplate, opts: HardenOptions | None = None) -> ProtocolTemplate:
    report = in_class_c(p)
    if not report.passed:
        raise NotInClassC(report.witnesses)
    return _Hardener(p, opts or HardenOptions()).run()


# ---------------------------------------------------------------------------
# comparisons

def _strip(items: tuple, sig: tuple, pads: set[Term]):
    """Ways to split off the signature and a run of padding or one tag."""
    if items[:len(sig)] != sig:
        return
    rest = items[len(sig):]
    yield rest
    if rest and isinstance(rest[0], Constant) and rest[0] not in sig:
        yield rest[1:]
    for pad in pads:
        i = 0
        while i < len(rest) and rest[i] == pad:
            i += 1
            yield rest[i:]


def _signed_like(t2: Term, t1: Term, sig: tuple, pads: set[Term]) -> bool:
    """t2 equals t1 with the signature inserted into each encryption,
    modulo padding or tags right after it."""
    if isinstance(t1, Enc):
        if not isinstance(t2, Enc) or t2.key != t1.key:
            return False
        target = elements(t1.body)
        for rest in _strip(elements(t2.body), sig, pads):
            if len(rest) == len(target) and all(
                    _signed_like(a, b, sig, pads) for a, b in zip(rest, target)):
                return True
        return False
    if isinstance(t1, Tup):
        return (isinstance(t2, Tup) and len(t2.items) == len(t1.items)
                and all(_signed_like(a, b, sig, pads) for a, b in zip(t2.items, t1.items)))
    return t1 == t2


def _same_crypto(c2: frozenset, c1: frozenset, sig, pads) -> bool:
    if len(c2) != len(c1):
        return False
    left = set(c1)
    for t2 in sorted(c2):
        match = next((t1 for t1 in sorted(left) if _signed_like(t2, t1, sig, pads)), None)
        if match is None:
            return False
        left.discard(match)
    return True


def weakly_equivalent(p: ProtocolTemplate, p2: ProtocolTemplate) -> bool:
    r1, r2 = check_realizable(p), check_realizable(p2)
    for r in (r1, r2):
        if not r.realizable:
            raise NotRealizable(str(r.failure))
    if p.roles != p2.roles:
        return False
    extra = [n for n in p2.nonces if n not in p.nonces]
    if len(extra) != 1:
        return False
    nonce = extra[0]
    sig = (nonce, *p.roles)
    delta = set(p.roles) | {nonce}
    tags = set(p2.consts) - set(p.consts)
    for role in p.roles:
        rows1, rows2 = r1.table[role], r2.table[role]
        if len(rows1) != len(rows2):
            return False
        if rows1[0].basic != rows2[0].basic - tags or rows1[0].crypto != rows2[0].crypto:
            return False
        for k1, k2 in zip(rows1[1:], rows2[1:]):
            if k2.basic - tags != k1.basic | delta:
                return False
            if not _same_crypto(k2.crypto, k1.crypto, sig, set(p.roles)):
                return False
    return True


def equal_modulo_padding(p: ProtocolTemplate, q: ProtocolTemplate) -> bool:
    """Same protocol up to the multiplicity and choice of role padding.

    Both must carry the same signature; right after it in every encrypted
    body, a run of copies of any one role is ignored.
    """
    if p.roles != q.roles or len(p.messages) != len(q.messages):
        return False
    sig = _find_signature(p)
    if sig is None or sig != _find_signature(q):
        return False
    pads = set(p.roles)
    return all(a.sender == b.sender and a.receiver == b.receiver
               and _pad_equal(a.content, b.content, sig, pads)
               for a, b in zip(p.messages, q.messages))


def _find_signature(p: ProtocolTemplate) -> tuple | None:
    if not p.messages:
        return None
    head = elements(p.messages[0].content)
    for n in p.nonces:
        sig = signature(p, n)
        if head[:len(sig)] == sig:
            return sig
    return None


def _pad_equal(a: Term, b: Term, sig: tuple, pads: set[Term]) -> bool:
    if isinstance(a, Enc):
        if not isinstance(b, Enc) or a.key != b.key:
            return False
        for ra in _strip(elements(a.body), sig, pads):
            for rb in _strip(elements(b.body), sig, pads):
                if len(ra) == len(rb) and all(
                        _pad_equal(x, y, sig, pads) for x, y in zip(ra, rb)):
                    return True
        return False
    if isinstance(a, Tup):
        return (isinstance(b, Tup) and len(a.items) == len(b.items)
                and all(_pad_equal(x, y, sig, pads) for x, y in zip(a.items, b.items)))
    return a == b
