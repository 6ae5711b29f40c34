"""Object-code checking: control-flow graph, soundness, precision, label costs.

The control-flow graph of a register-machine code has one node per
instruction position; halt nodes are leaves, two-way branches have the
fall-through successor listed before the jump target, and a node is
labelled when it holds ``nop <label>``.

A *simple path* starts at a labelled node, crosses only unlabelled
nodes, and ends on the predecessor of the next labelled node or of a
leaf.  A code is *soundly labelled* when the root is labelled and every
cycle crosses a labelled node: then each label has finitely many simple
paths and its cost is the maximum path cost (the starting node's own
cost included, the stopping node excluded; a labelled node directly
followed by a leaf or another label contributes just its own cost).
Sound labelling makes the priced trace of any run an upper bound on the
run's measured cost; if additionally all simple paths of each label
cost the same (no warnings), the priced trace is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Label, Trace
from .mips import Bge, Branch, Halt, MachineConfig, MipsCode, Nop, opcode

#: Label-cost mapping; extended additively over traces by ``trace_cost``.
CostMap = dict[Label, int]

#: A precision conflict: two different simple-path costs merged for a label.
PrecisionConflict = tuple[Label, int, int]


class CostCheckError(Exception):
    pass


class DanglingTarget(CostCheckError):
    """A control transfer leads outside the code."""


class UnsoundGraph(CostCheckError):
    """Cost computation requires a soundly labelled graph."""


@dataclass(frozen=True)
class Cfg:
    """Successor lists, per-node labels, and per-node opcodes."""

    succs: tuple[tuple[int, ...], ...]
    labels: tuple[Label | None, ...]
    opcodes: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.succs)

    def is_leaf(self, node: int) -> bool:
        return not self.succs[node]

    def is_labelled(self, node: int) -> bool:
        return self.labels[node] is not None


@dataclass(frozen=True)
class CheckReport:
    """The checker's verdict plus the evidence behind it."""

    sound: bool
    cycle: tuple[int, ...] | None  # an unlabelled cycle, when unsound
    precise: bool
    warnings: tuple[PrecisionConflict, ...]
    kappa: CostMap | None  # absent when unsound


def build_cfg(code: MipsCode) -> Cfg:
    n = len(code)
    succs: list[tuple[int, ...]] = []
    labels: list[Label | None] = []
    for i, instr in enumerate(code):
        match instr:
            case Halt():
                out: tuple[int, ...] = ()
            case Branch(k):
                out = (i + k + 1,)
            case Bge(_, _, k):
                out = (i + 1, i + k + 1)  # fall-through first
            case _:
                out = (i + 1,)
        for t in out:
            if not 0 <= t < n:
                raise DanglingTarget(f"position {i}: successor {t} outside 0..{n - 1}")
        succs.append(out)
        labels.append(instr.label if isinstance(instr, Nop) else None)
    return Cfg(tuple(succs), tuple(labels), tuple(opcode(ins) for ins in code))


# ---------------------------------------------------------------------------
# Soundness: the root is labelled and no cycle avoids labels


def _sccs_without_labels(cfg: Cfg) -> list[list[int]]:
    """Tarjan's strongly connected components of the label-deleted subgraph."""
    n = len(cfg)
    alive = [not cfg.is_labelled(v) for v in range(n)]
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    sccs: list[list[int]] = []
    counter = 0

    for root in range(n):
        if not alive[root] or root in index:
            continue
        work: list[tuple[int, int]] = [(root, 0)]
        while work:
            node, child_idx = work[-1]
            if child_idx == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            kids = [v for v in cfg.succs[node] if alive[v]]
            descended = False
            while child_idx < len(kids):
                child = kids[child_idx]
                child_idx += 1
                if child not in index:
                    work[-1] = (node, child_idx)
                    work.append((child, 0))
                    descended = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if descended:
                continue
            if low[node] == index[node]:
                component = []
                while True:
                    v = stack.pop()
                    on_stack.discard(v)
                    component.append(v)
                    if v == node:
                        break
                sccs.append(sorted(component))
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return sccs


def _cycle_within(cfg: Cfg, component: list[int]) -> tuple[int, ...]:
    """A concrete cycle inside a strongly connected set of unlabelled nodes."""
    members = set(component)
    start = component[0]
    # breadth-first search from each successor of `start` back to `start`
    for first in cfg.succs[start]:
        if first not in members:
            continue
        if first == start:
            return (start,)
        parent = {first: start}
        queue = [first]
        while queue:
            node = queue.pop(0)
            for nxt in cfg.succs[node]:
                if nxt == start:
                    path = [node]
                    while path[-1] != start:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                if nxt in members and nxt not in parent:
                    parent[nxt] = node
                    queue.append(nxt)
    raise AssertionError("strongly connected component without a cycle")


def check_sound(cfg: Cfg) -> tuple[bool, tuple[int, ...] | None]:
    """Is the labelling sound?  On failure, also return an offending cycle
    (when one exists; an unlabelled root alone yields no cycle witness)."""
    if len(cfg) == 0 or not cfg.is_labelled(0):
        return False, None
    for component in _sccs_without_labels(cfg):
        if len(component) > 1 or component[0] in cfg.succs[component[0]]:
            return False, _cycle_within(cfg, component)
    return True, None


# ---------------------------------------------------------------------------
# Label costs and precision


def _suffix_costs(
    cfg: Cfg, costs: list[int]
) -> tuple[dict[int, int], dict[int, tuple[int, int]]]:
    """Max remaining-path cost from every unlabelled non-leaf node.

    ``suffix[u]`` prices the path segment starting at ``u`` and running
    to the predecessor of the next labelled node or leaf.  Also returns
    the merge events: nodes where two different branch prices met.
    """
    suffix: dict[int, int] = {}
    merges: dict[int, tuple[int, int]] = {}
    GREY = object()
    state: dict[int, object] = {}

    def stops(v: int) -> bool:
        return cfg.is_labelled(v) or cfg.is_leaf(v)

    for root in range(len(cfg)):
        if stops(root) or root in suffix:
            continue
        stack = [root]
        while stack:
            node = stack[-1]
            if node in suffix:
                stack.pop()
                continue
            if state.get(node) is not GREY:
                state[node] = GREY
                pending = False
                for child in cfg.succs[node]:
                    if not stops(child) and child not in suffix:
                        if state.get(child) is GREY:
                            raise UnsoundGraph(
                                f"unlabelled cycle through position {child}"
                            )
                        stack.append(child)
                        pending = True
                if pending:
                    continue
            values = [0 if stops(v) else suffix[v] for v in cfg.succs[node]]
            if len(values) == 2 and values[0] != values[1]:
                merges[node] = (values[0], values[1])
            suffix[node] = costs[node] + max(values)
            state.pop(node, None)
            stack.pop()
    return suffix, merges


def compute_costmap(cfg: Cfg, mcfg: MachineConfig) -> tuple[CostMap, tuple[PrecisionConflict, ...]]:
    """Price every label: the maximum cost over its simple paths.

    A warning ``(label, a, b)`` is recorded whenever two different
    branch prices merge on a path of that label, or when several
    occurrences of one label price differently.
    """
    ok, _ = check_sound(cfg)
    if not ok:
        raise UnsoundGraph("cost computation requires a soundly labelled graph")
    costs = [mcfg.cost(op) for op in cfg.opcodes]
    suffix, merges = _suffix_costs(cfg, costs)

    def stops(v: int) -> bool:
        return cfg.is_labelled(v) or cfg.is_leaf(v)

    def merge_nodes_reachable(start: int) -> list[int]:
        seen: set[int] = set()
        frontier = [v for v in cfg.succs[start] if not stops(v)]
        while frontier:
            node = frontier.pop()
            if node in seen:
                continue
            seen.add(node)
            frontier.extend(v for v in cfg.succs[node] if not stops(v) and v not in seen)
        return sorted(v for v in seen if v in merges)

    occurrences: dict[Label, list[int]] = {}
    for node in range(len(cfg)):
        lab = cfg.labels[node]
        if lab is not None:
            occurrences.setdefault(lab, []).append(node)

    kappa: CostMap = {}
    warnings: list[PrecisionConflict] = []
    for lab in sorted(occurrences):
        per_occurrence: list[int] = []
        for node in sorted(occurrences[lab]):
            values = [0 if stops(v) else suffix[v] for v in cfg.succs[node]]
            if len(values) == 2 and values[0] != values[1]:
                warnings.append((lab, values[0], values[1]))
            per_occurrence.append(costs[node] + (max(values) if values else 0))
            for merge_node in merge_nodes_reachable(node):
                warnings.append((lab, *merges[merge_node]))
        kappa[lab] = max(per_occurrence)
        if min(per_occurrence) != max(per_occurrence):
            warnings.append((lab, max(per_occurrence), min(per_occurrence)))
    deduped = list(dict.fromkeys(warnings))
    return kappa, tuple(deduped)


def precise_precheck(cfg: Cfg) -> bool:
    """A fast sufficient condition for precision: every label occurs at
    most once and every successor of a two-way branch is labelled or a leaf."""
    seen: set[Label] = set()
    for node in range(len(cfg)):
        lab = cfg.labels[node]
        if lab is not None:
            if lab in seen:
                return False
            seen.add(lab)
        if len(cfg.succs[node]) == 2:
            for v in cfg.succs[node]:
                if not (cfg.is_labelled(v) or cfg.is_leaf(v)):
                    return False
    return True


def check_precise(cfg: Cfg, mcfg: MachineConfig) -> bool:
    """Do all simple paths of each label cost the same?"""
    ok, _ = check_sound(cfg)
    if not ok:
        raise UnsoundGraph("precision is only defined for soundly labelled graphs")
    _, warnings = compute_costmap(cfg, mcfg)
    if precise_precheck(cfg) and warnings:
        raise AssertionError("precision pre-check held but warnings were produced")
    return not warnings


def analyze(code: MipsCode, mcfg: MachineConfig) -> CheckReport:
    """Run the whole check on a labelled code: soundness, costs, precision."""
    cfg = build_cfg(code)
    sound, cycle = check_sound(cfg)
    if not sound:
        return CheckReport(sound=False, cycle=cycle, precise=False, warnings=(), kappa=None)
    kappa, warnings = compute_costmap(cfg, mcfg)
    if precise_precheck(cfg) and warnings:
        raise AssertionError("precision pre-check held but warnings were produced")
    return CheckReport(
        sound=True, cycle=None, precise=not warnings, warnings=warnings, kappa=kappa
    )


def trace_cost(kappa: CostMap, trace: Trace) -> int:
    """The additive extension of the label costs to a whole trace."""
    return sum(kappa[lab] for lab in trace)


# ---------------------------------------------------------------------------
# Report serialization


def format_report(report: CheckReport) -> str:
    lines = [f"sound={'true' if report.sound else 'false'}"]
    lines.append(f"precise={'true' if report.precise else 'false'}")
    if report.kappa is not None:
        for lab in sorted(report.kappa):
            lines.append(f"kappa {lab} = {report.kappa[lab]}")
    for lab, a, b in report.warnings:
        lines.append(f"warning {lab}: {a} != {b}")
    if not report.sound and report.cycle is not None:
        path = " -> ".join(str(v) for v in report.cycle + (report.cycle[0],))
        lines.append(f"cycle: {path}")
    return "\n".join(lines) + "\n"


def report_to_json(report: CheckReport) -> dict:
    return {
        "sound": report.sound,
        "precise": report.precise,
        "kappa": (
            {str(lab): k for lab, k in sorted(report.kappa.items())}
            if report.kappa is not None
            else None
        ),
        "warnings": [[str(lab), a, b] for lab, a, b in report.warnings],
        "cycle": list(report.cycle) if report.cycle is not None else None,
    }
