"""Label placement, instrumentation, and the source-annotation pipeline.

Two labelling strategies are provided.  The *simple* one puts a label at
the program root and at the start of every loop body: enough to make
every run's label trace bound the object-code cost from above.  The
*precise* one labels every branch of every conditional and the
statement following each conditional or loop, aiming for label traces
whose cost equals the object-code cost exactly.

Instrumentation replaces each label with ``cost := cost + <k>`` where
``k`` comes from a label-cost mapping, turning the labelled program back
into a plain program that self-monitors its own predicted cost.

Known precision limit: when a loop sits in tail position inside a
conditional branch (or inside another loop's body), its exit lands on
unlabelled glue jumps, so two differently-priced paths share the loop's
label and the checker reports a precision warning even under the
precise strategy.  The cost bound remains sound; only exactness is
lost.  The checker's verdict, not the strategy used, is the reliable
signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from . import costcheck, imp, passes
from .core import COST_VAR, Label
from .costcheck import CheckReport, CostMap
from .mips import MachineConfig


class LabellingError(Exception):
    pass


class AlreadyLabelled(LabellingError):
    """The input program must be label-free."""


class UnknownLabel(LabellingError):
    """A label in the program is missing from the cost mapping."""


class ReservedIdentifierInUse(LabellingError):
    """The program already uses the cost accumulator variable."""


class UnsoundLabelling(LabellingError):
    """The object code failed the soundness check; no annotation exists."""

    def __init__(self, report: CheckReport):
        cycle = " -> ".join(map(str, report.cycle or ()))
        super().__init__(f"object code has an unlabelled cycle: {cycle}")
        self.report = report


@dataclass(frozen=True, slots=True)
class LabelSupply:
    """A deterministic source of fresh labels, passed and returned as a value."""

    next_index: int = 0

    def fresh(self) -> tuple[Label, "LabelSupply"]:
        return Label(self.next_index), LabelSupply(self.next_index + 1)


def _require_unlabelled(program: imp.Program) -> None:
    if not imp.is_unlabelled(program.body):
        raise AlreadyLabelled("the input program already contains labels")


def label_simple(program: imp.Program) -> imp.Program:
    """Label the root and each loop body, issuing ``_l0, _l1, ...`` in preorder."""
    _require_unlabelled(program)
    supply = LabelSupply()
    root, supply = supply.fresh()

    def walk(s: imp.Stmt, sup: LabelSupply) -> tuple[imp.Stmt, LabelSupply]:
        match s:
            case imp.Seq(a, b):
                a2, sup = walk(a, sup)
                b2, sup = walk(b, sup)
                return imp.Seq(a2, b2), sup
            case imp.If(cond, then, orelse):
                t2, sup = walk(then, sup)
                e2, sup = walk(orelse, sup)
                return imp.If(cond, t2, e2), sup
            case imp.While(cond, body):
                lab, sup = sup.fresh()
                body2, sup = walk(body, sup)
                return imp.While(cond, imp.Labelled(lab, body2)), sup
            case _:
                return s, sup

    body, _ = walk(program.body, supply)
    return imp.Program(imp.Labelled(root, body))


def label_precise(program: imp.Program) -> imp.Program:
    """Label every command path split.

    Each labelled unit starts with a fresh label; both branches of a
    conditional and the body of a loop are labelled units; and whenever
    a conditional or loop is followed by another statement in a
    sequence, that statement gets a label of its own.
    """
    _require_unlabelled(program)

    def unit(s: imp.Stmt, sup: LabelSupply) -> tuple[imp.Stmt, LabelSupply]:
        lab, sup = sup.fresh()
        s2, _, sup = aux(s, sup)
        return imp.Labelled(lab, s2), sup

    # aux returns (statement, needs-labelled-sequel, supply)
    def aux(s: imp.Stmt, sup: LabelSupply) -> tuple[imp.Stmt, int, LabelSupply]:
        match s:
            case imp.Skip() | imp.Assign(_, _):
                return s, 0, sup
            case imp.If(cond, then, orelse):
                t2, sup = unit(then, sup)
                e2, sup = unit(orelse, sup)
                return imp.If(cond, t2, e2), 1, sup
            case imp.While(cond, body):
                body2, sup = unit(body, sup)
                return imp.While(cond, body2), 1, sup
            case imp.Seq(a, b):
                a2, d1, sup = aux(a, sup)
                b2, d2, sup = aux(b, sup)
                if d1 == 1:
                    lab, sup = sup.fresh()
                    b2 = imp.Labelled(lab, b2)
                return imp.Seq(a2, b2), d2, sup
        raise TypeError(f"not a statement: {s!r}")

    body, _ = unit(program.body, LabelSupply())
    return imp.Program(body)


LABELLINGS = {"simple": label_simple, "precise": label_precise}


def instrument(program: imp.Program, kappa: Mapping[Label, int]) -> imp.Program:
    """Replace each label with ``cost := cost + kappa(label)``.

    Every label must be priced with a natural number, and the program
    must not already use the cost variable.  The result is label-free.
    """
    if imp.uses_identifier(program, COST_VAR):
        raise ReservedIdentifierInUse(f"program already uses {COST_VAR!r}")
    for lab, k in kappa.items():
        if k < 0:
            raise ValueError(f"cost of {lab} must be a natural: {k}")

    def walk(s: imp.Stmt) -> imp.Stmt:
        match s:
            case imp.Labelled(lab, body):
                if lab not in kappa:
                    raise UnknownLabel(f"no cost known for {lab}")
                inc = imp.Assign(COST_VAR, imp.Add(imp.Var(COST_VAR), imp.Const(kappa[lab])))
                return imp.Seq(inc, walk(body))
            case imp.Seq(a, b):
                return imp.Seq(walk(a), walk(b))
            case imp.If(cond, a, b):
                return imp.If(cond, walk(a), walk(b))
            case imp.While(cond, body):
                return imp.While(cond, walk(body))
            case _:
                return s

    return imp.Program(walk(program.body))


def annotate(
    program: imp.Program,
    labelling: str = "simple",
    cfg: MachineConfig | None = None,
) -> tuple[imp.Program, CostMap, CheckReport]:
    """The whole pipeline: label, compile twice, check, price, instrument.

    Returns the annotated source (a plain program whose only extra
    effect is on the cost variable), the label-cost mapping, and the
    checker's report.  Aborts with :class:`UnsoundLabelling` if the
    object code fails the soundness check.
    """
    if cfg is None:
        cfg = MachineConfig()
    if labelling not in LABELLINGS:
        raise ValueError(f"unknown labelling {labelling!r}")
    _require_unlabelled(program)
    labelled = LABELLINGS[labelling](program)
    stack_code = passes.compile_program(labelled)
    object_code, _ = passes.compile_vm(stack_code, cfg)
    report = costcheck.analyze(object_code, cfg)
    if not report.sound:
        raise UnsoundLabelling(report)
    assert report.kappa is not None
    annotated = instrument(labelled, report.kappa)
    return annotated, report.kappa, report
