"""Command-line front end.

Exit codes: 0 when the checked property holds or a transformation succeeded,
1 when it fails or an attack was found, 2 on usage or input errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .harden import (
    HardenOptions, NotInClassC, check_well_composed, equal_modulo_padding,
    harden, in_class_c, weakly_equivalent,
)
from .protocol import ProtocolError, ProtocolTemplate, check_realizable, revealed_vars
from .search import Target, authcheck, check_authenticity, find_secrecy_attack
from .semantics import Bounds, Scenario
from .syntax import load_spec, render_spec, render_term

__all__ = ["RunReport", "run", "main"]


@dataclass
class RunReport:
    command: str
    inputs: list[str]
    code: int = 0
    verdicts: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)
    text: list[str] = field(default_factory=list)

    def render(self) -> str:
        return "\n".join(self.text)

    def to_json(self) -> dict:
        return {"command": self.command, "inputs": self.inputs, "exit": self.code,
                "verdicts": self.verdicts, "tables": self.tables, "traces": self.traces,
                "text": self.text}


def _names(terms) -> list[str]:
    return sorted(render_term(t) for t in terms)


def knowledge_table(p: ProtocolTemplate) -> tuple[list[str], dict]:
    """The per-step knowledge additions of every role as aligned text."""
    rep = check_realizable(p)
    header = ["", *[r.name for r in p.roles]]
    rows = [["Initial"]]
    data: dict = {"Initial": {}}
    for r in p.roles:
        kn0 = rep.knowledge(r, 0)
        cell = _names((kn0.basic | kn0.crypto) - {r})
        rows[0].append(", ".join(cell))
        data["Initial"][r.name] = cell
    added = {r: rep.by_message(r) for r in p.roles}
    for m in p.messages:
        label = f"Step {m.index}"
        row, data[label] = [label], {}
        for r in p.roles:
            cell = _names(added[r].get(m.index, ()))
            row.append(", ".join(cell))
            data[label][r.name] = cell
        rows.append(row)
    widths = [max(len(x[i]) for x in [header, *rows]) for i in range(len(header))]

    def fmt(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    lines = [fmt(header), "-+-".join("-" * w for w in widths)]
    lines += [fmt(r) for r in rows]
    return lines, data


def _bounds(args) -> Bounds:
    return Bounds(args.max_sessions, args.max_events, args.synth_depth, args.intruder_fresh)


def _scenario(args, p: ProtocolTemplate) -> Scenario:
    return Scenario.default(p, any_role=args.any_role)


def _targets(args, p: ProtocolTemplate):
    if args.secret is None:
        if args.viewpoint is not None:
            raise ProtocolError("--viewpoint needs --secret")
        return None
    var = p.lookup(args.secret)
    if args.viewpoint is not None:
        return [Target(var, p.role(args.viewpoint))]
    return [Target(var, r) for r in p.roles]


def _cmd_parse(args, rep: RunReport):
    p = load_spec(args.file)
    text = render_spec(p)
    rep.text += text.rstrip("\n").split("\n")
    rep.tables["spec"] = text


def _cmd_realizable(args, rep: RunReport):
    p = load_spec(args.file)
    r = check_realizable(p)
    lines, data = knowledge_table(p)
    rep.text += lines
    rep.tables["knowledge"] = data
    rep.verdicts["realizable"] = r.realizable
    if r.realizable:
        rep.text.append("realizable")
    else:
        rep.text.append(f"not realizable: {r.failure}")
        rep.verdicts["failure"] = str(r.failure)
        rep.code = 1


def _cmd_revealed(args, rep: RunReport):
    p = load_spec(args.file)
    revealed, hidden = revealed_vars(p)
    rep.verdicts["revealed"] = _names(revealed)
    rep.verdicts["unrevealed"] = _names(hidden)
    rep.text.append("revealed: " + (", ".join(_names(revealed)) or "none"))
    rep.text.append("unrevealed: " + (", ".join(_names(hidden)) or "none"))


def _cmd_wellcomposed(args, rep: RunReport):
    p = load_spec(args.file)
    wc = check_well_composed(p)
    rep.text += wc.lines()
    rep.verdicts["well_composed"] = wc.to_json()
    rep.code = 0 if wc.passed else 1


def _cmd_classc(args, rep: RunReport):
    p = load_spec(args.file)
    c = in_class_c(p)
    rep.text += [f"  - {w}" for w in c.witnesses]
    rep.text.append("in class C" if c.passed else "not in class C")
    rep.verdicts["class_c"] = c.passed
    rep.verdicts["witnesses"] = c.witnesses
    rep.code = 0 if c.passed else 1


def _cmd_harden(args, rep: RunReport):
    p = load_spec(args.file)
    try:
        q = harden(p, HardenOptions(args.tag_style))
    except NotInClassC as e:
        rep.text.append(str(e))
        rep.verdicts["class_c"] = False
        rep.code = 1
        return
    text = render_spec(q)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        rep.text.append(f"wrote {args.output}")
    else:
        rep.text += text.rstrip("\n").split("\n")
    rep.tables["spec"] = text
    rep.verdicts["well_composed"] = check_well_composed(q).passed
    rep.verdicts["weakly_equivalent"] = weakly_equivalent(p, q)


def _cmd_equiv(args, rep: RunReport):
    p, q = load_spec(args.file), load_spec(args.other)
    ok = weakly_equivalent(p, q)
    rep.verdicts["weakly_equivalent"] = ok
    rep.text.append(("weakly equivalent" if ok else "not weakly equivalent")
                    + f": {p.name} / {q.name}")
    try:
        same = equal_modulo_padding(p, q)
    except ProtocolError:
        same = False
    rep.verdicts["equal_modulo_padding"] = same
    rep.code = 0 if ok else 1


def _cmd_search(args, rep: RunReport):
    p = load_spec(args.file)
    res = find_secrecy_attack(p, _bounds(args), _targets(args, p), _scenario(args, p),
                              args.max_states)
    rep.verdicts["search"] = res.to_json()
    for t in res.not_evaluable:
        rep.text.append(f"skipped {t}: no session step knows it together with every role")
    if res.found:
        rep.text += res.attack.lines()
        bad = check_authenticity(res.attack.trace, p)
        for v in bad:
            rep.text.append(f"authenticity: {v}")
        rep.verdicts["authenticity"] = [str(v) for v in bad]
        rep.traces.append(res.attack.to_json())
        rep.code = 1
    elif res.exhausted:
        rep.text.append("no attack: bounded space exhausted")
    else:
        rep.text.append("no attack among the explored states; state cap reached")
    rep.text.append(f"explored states: {res.explored} ({res.elapsed:.2f} s)")


def _cmd_authcheck(args, rep: RunReport):
    p = load_spec(args.file)
    res = authcheck(p, _bounds(args), _scenario(args, p), args.max_states)
    rep.verdicts["authcheck"] = res.to_json()
    for v, t in res.violations:
        rep.text.append(str(v))
        rep.traces.append([str(e) for e in t.events])
    rep.text.append(f"violations: {res.count}")
    rep.text.append(f"explored states: {res.explored}, receive checks: {res.transitions}"
                    + ("" if res.exhausted else " (state cap reached)"))
    rep.code = 1 if res.count else 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dove", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", metavar="FILE", help="also write the report as JSON")

    bounded = argparse.ArgumentParser(add_help=False)
    b = Bounds()
    bounded.add_argument("--max-sessions", type=int, default=b.max_sessions)
    bounded.add_argument("--max-events", type=int, default=b.max_events)
    bounded.add_argument("--synth-depth", type=int, default=b.synth_depth)
    bounded.add_argument("--intruder-fresh", type=int, default=b.intruder_fresh)
    bounded.add_argument("--max-states", type=int, default=None)
    bounded.add_argument("--any-role", action="store_true",
                         help="every honest agent may play every role")

    for name, fn, extra in [
        ("parse", _cmd_parse, ()), ("realizable", _cmd_realizable, ()),
        ("revealed", _cmd_revealed, ()), ("wellcomposed", _cmd_wellcomposed, ()),
        ("classc", _cmd_classc, ()), ("harden", _cmd_harden, ()),
        ("equiv", _cmd_equiv, ()), ("search", _cmd_search, (bounded,)),
        ("authcheck", _cmd_authcheck, (bounded,)),
    ]:
        sp = sub.add_parser(name, parents=[common, *extra])
        sp.add_argument("file")
        sp.set_defaults(fn=fn)
        if name == "harden":
            sp.add_argument("--tag-style", choices=["role-padding", "int"],
                            default="role-padding")
            sp.add_argument("-o", "--output")
        elif name == "equiv":
            sp.add_argument("other")
        elif name == "search":
            sp.add_argument("--secret")
            sp.add_argument("--viewpoint")
    return ap


def run(argv: list[str] | None = None) -> RunReport:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return RunReport("", list(argv or []), code=2 if e.code else 0)
    inputs = [args.file] + ([args.other] if getattr(args, "other", None) else [])
    rep = RunReport(args.command, inputs)
    try:
        args.fn(args, rep)
    except (OSError, ProtocolError, ValueError) as e:
        rep.text.append(f"error: {e}")
        rep.code = 2
    if args.json:
        Path(args.json).write_text(json.dumps(rep.to_json(), indent=2), encoding="utf-8")
    return rep


def main(argv: list[str] | None = None) -> int:
    rep = run(argv)
    if rep.text:
        out = sys.stderr if rep.code == 2 else sys.stdout
        print(rep.render(), file=out)
    return rep.code


if __name__ == "__main__":
    sys.exit(main())
