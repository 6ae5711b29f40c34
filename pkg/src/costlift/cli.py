"""Command-line driver: compile, annotate, run, check, selftest.

Exit codes form a total map over outcome classes:

    0  success (warnings allowed)
    1  parse error in an input file
    2  compilation or runtime error
    3  the object code is unsoundly labelled
    4  fuel exhausted (possible divergence)
    5  self-test property failures

File formats are chosen by extension: ``.imp`` source programs,
``.vm`` stack code, ``.mips`` register code, one instruction per line.
All randomness flows from ``--seed``; identical invocations produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from . import costcheck, imp, labelling, mips, passes, selftest, vm
from .core import COST_VAR, FuelExhausted, Store
from .mips import MachineConfig

_EXIT_PARSE = 1
_EXIT_ERROR = 2
_EXIT_UNSOUND = 3
_EXIT_FUEL = 4
_EXIT_SELFTEST = 5

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _fail(message: str, code: int) -> int:
    print(f"costlift: {message}", file=sys.stderr)
    return code


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _parse_costs_file(path: str) -> dict[str, int]:
    overrides: dict[str, int] = {}
    for lineno, raw in enumerate(_read(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] not in mips.DEFAULT_COSTS:
            raise ValueError(f"{path}:{lineno}: expected '<opcode> <natural>'")
        value = int(parts[1])
        if value < 0:
            raise ValueError(f"{path}:{lineno}: costs must be naturals")
        overrides[parts[0]] = value
    return overrides


def _machine_config(args: argparse.Namespace) -> MachineConfig:
    cfg = MachineConfig(b=args.b)
    if getattr(args, "costs", None):
        cfg = cfg.with_costs(_parse_costs_file(args.costs))
    return cfg


def _parse_bindings(pairs: list[str]) -> Store:
    bindings: dict[str, int] = {}
    for pair in pairs or []:
        name, sep, value = pair.partition("=")
        if not sep or not _IDENT_RE.fullmatch(name):
            raise ValueError(f"bad --set argument {pair!r}; expected name=int")
        bindings[name] = int(value)
    return Store(bindings)


def _format_bindings(bindings: dict[str, int]) -> str:
    names = sorted(n for n in bindings if n != COST_VAR)
    if COST_VAR in bindings:
        names.append(COST_VAR)
    return " ".join(f"{n}={bindings[n]}" for n in names)


def _stage_of(path: str, flag: str | None) -> str:
    by_ext = {".imp": "imp", ".vm": "vm", ".mips": "mips"}
    inferred = by_ext.get(Path(path).suffix)
    if flag is None:
        if inferred is None:
            raise ValueError(f"cannot infer stage from {path!r}; pass --stage")
        return inferred
    if inferred is not None and inferred != flag:
        raise ValueError(f"{path!r} does not look like a {flag} file")
    return flag


def _labelled_program(args: argparse.Namespace, text: str) -> imp.Program:
    program = imp.parse_imp(text)
    if args.labelling == "none":
        return program
    return labelling.LABELLINGS[args.labelling](program)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_compile(args: argparse.Namespace) -> int:
    try:
        program = _labelled_program(args, _read(args.input))
    except imp.ImpSyntaxError as exc:
        return _fail(str(exc), _EXIT_PARSE)
    except labelling.LabellingError as exc:
        return _fail(str(exc), _EXIT_ERROR)
    try:
        cfg = _machine_config(args)
        stack_code = passes.compile_program(program)
        if args.emit == "vm":
            sys.stdout.write(vm.print_vm(stack_code))
            return 0
        object_code, _ = passes.compile_vm(stack_code, cfg)
        if args.emit == "mips-erased":
            object_code = mips.erase_mips(object_code)
        sys.stdout.write(mips.print_mips(object_code))
        return 0
    except (vm.VmError, passes.MissingHalt, ValueError) as exc:
        return _fail(str(exc), _EXIT_ERROR)


def _cmd_annotate(args: argparse.Namespace) -> int:
    try:
        program = imp.parse_imp(_read(args.input))
    except imp.ImpSyntaxError as exc:
        return _fail(str(exc), _EXIT_PARSE)
    try:
        cfg = _machine_config(args)
        annotated, _, report = labelling.annotate(program, args.labelling, cfg)
    except labelling.UnsoundLabelling as exc:
        print(costcheck.format_report(exc.report), end="")
        return _fail(str(exc), _EXIT_UNSOUND)
    except (labelling.LabellingError, vm.VmError, passes.MissingHalt, ValueError) as exc:
        return _fail(str(exc), _EXIT_ERROR)
    if args.json:
        payload = {
            "annotated": imp.print_imp(annotated),
            "report": costcheck.report_to_json(report),
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        print(imp.print_imp(annotated))
        sys.stdout.write(costcheck.format_report(report))
    return 0


def _run_stage(args: argparse.Namespace, stage: str, text: str) -> tuple[dict, str]:
    store = _parse_bindings(args.set)
    cfg = _machine_config(args)
    if stage == "imp":
        program = imp.parse_imp(text, allow_cost=True)
        final, trace = imp.run_imp(program, store, args.fuel)
        return {"bindings": final.bindings, "trace": [str(l) for l in trace]}, ""
    if stage == "vm":
        code = vm.parse_vm(text)
        final, trace = vm.run_vm(code, store, args.fuel)
        return {"bindings": final.bindings, "trace": [str(l) for l in trace]}, ""
    code = mips.parse_mips(text)
    memory, trace, cost = mips.run_mips(code, mips.init_memory(store, cfg), cfg, args.fuel)
    return {
        "bindings": memory.variable_bindings(),
        "trace": [str(l) for l in trace],
        "cost": cost,
    }, ""


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        stage = _stage_of(args.input, args.stage)
        text = _read(args.input)
    except ValueError as exc:
        return _fail(str(exc), _EXIT_ERROR)
    try:
        result, _ = _run_stage(args, stage, text)
    except (imp.ImpSyntaxError, vm.VmSyntaxError, mips.MipsSyntaxError) as exc:
        return _fail(str(exc), _EXIT_PARSE)
    except FuelExhausted as exc:
        return _fail(str(exc), _EXIT_FUEL)
    except (vm.VmError, mips.MipsError, imp.TerminalConfiguration, ValueError) as exc:
        return _fail(str(exc), _EXIT_ERROR)
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(_format_bindings(result["bindings"]))
        trace = " ".join(result["trace"])
        print(f"trace: {trace}".rstrip())
        if "cost" in result:
            print(f"cost: {result['cost']}")
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    try:
        suffix = Path(args.input).suffix
        stage = {".vm": "vm", ".mips": "mips"}.get(suffix, "imp")
        text = _read(args.input)
        cfg = _machine_config(args)
        if stage == "imp":
            program = _labelled_program(args, text)
            object_code, _ = passes.compile_vm(passes.compile_program(program), cfg)
        elif stage == "vm":
            object_code, _ = passes.compile_vm(vm.parse_vm(text), cfg)
        else:
            object_code = mips.parse_mips(text)
    except (imp.ImpSyntaxError, vm.VmSyntaxError, mips.MipsSyntaxError) as exc:
        return _fail(str(exc), _EXIT_PARSE)
    except (labelling.LabellingError, vm.VmError, passes.MissingHalt, ValueError) as exc:
        return _fail(str(exc), _EXIT_ERROR)
    try:
        report = costcheck.analyze(object_code, cfg)
    except costcheck.CostCheckError as exc:
        return _fail(str(exc), _EXIT_ERROR)
    if args.json:
        print(json.dumps(costcheck.report_to_json(report), sort_keys=True))
    else:
        sys.stdout.write(costcheck.format_report(report))
    return 0 if report.sound else _EXIT_UNSOUND


def _cmd_selftest(args: argparse.Namespace) -> int:
    try:
        b_set = tuple(int(part) for part in args.b_set.split(","))
    except ValueError:
        return _fail(f"bad --b-set {args.b_set!r}", _EXIT_ERROR)
    report = selftest.run_selftest(
        seed=args.seed,
        count=args.count,
        max_size=args.max_size,
        b_set=b_set,
        trace_compare=args.trace_compare,
        mutate=args.mutate,
    )
    if args.json:
        payload = {
            "ok": report.ok,
            "cases": report.cases,
            "diverged": report.diverged,
            "properties": {
                name: {"pass": s.passed, "fail": s.failed}
                for name, s in sorted(report.properties.items())
            },
        }
        print(json.dumps(payload, sort_keys=True))
    else:
        sys.stdout.write(report.format_summary())
    return 0 if report.ok else _EXIT_SELFTEST


# ---------------------------------------------------------------------------
# Argument parsing


def _add_machine_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--b", type=int, default=4, help="register file size (default 4)")
    sub.add_argument("--costs", metavar="FILE", help="per-opcode cost overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="costlift",
        description="compile a toy language while lifting object-code costs "
        "back to source annotations, with checkable cost labels",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_compile = subs.add_parser("compile", help="compile a source file")
    p_compile.add_argument("input")
    p_compile.add_argument(
        "--emit", choices=("vm", "mips", "mips-erased"), default="mips"
    )
    p_compile.add_argument(
        "--labelling", choices=("none", "simple", "precise"), default="none"
    )
    _add_machine_args(p_compile)
    p_compile.set_defaults(func=_cmd_compile)

    p_annotate = subs.add_parser(
        "annotate", help="produce a cost-annotated copy of a source file"
    )
    p_annotate.add_argument("input")
    p_annotate.add_argument(
        "--labelling", choices=("simple", "precise"), default="simple"
    )
    p_annotate.add_argument("--json", action="store_true")
    _add_machine_args(p_annotate)
    p_annotate.set_defaults(func=_cmd_annotate)

    p_run = subs.add_parser("run", help="interpret a file at some stage")
    p_run.add_argument("input")
    p_run.add_argument("--stage", choices=("imp", "vm", "mips"))
    p_run.add_argument(
        "--set", action="append", metavar="NAME=INT", help="initial store entry"
    )
    p_run.add_argument("--fuel", type=int, default=100_000)
    p_run.add_argument("--json", action="store_true")
    _add_machine_args(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_check = subs.add_parser(
        "check", help="soundness/precision report for labelled object code"
    )
    p_check.add_argument("input")
    p_check.add_argument(
        "--labelling", choices=("none", "simple", "precise"), default="none"
    )
    p_check.add_argument("--json", action="store_true")
    _add_machine_args(p_check)
    p_check.set_defaults(func=_cmd_check)

    p_self = subs.add_parser("selftest", help="differential testing of all stages")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.add_argument("--count", type=int, default=500)
    p_self.add_argument("--max-size", type=int, default=30)
    p_self.add_argument("--b-set", default="0,1,2,4,8")
    p_self.add_argument(
        "--trace-compare", choices=("sequence", "multiset"), default="sequence"
    )
    p_self.add_argument("--mutate", choices=("swap-bge",))
    p_self.add_argument("--json", action="store_true")
    p_self.set_defaults(func=_cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
