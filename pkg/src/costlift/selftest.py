"""Differential self-testing of the whole tool chain.

Generates random source programs, pushes each through every stage
(labelling, both compilers, erasure, checking, instrumentation), and
cross-checks the stages against one another: label traces must agree
everywhere, final stores must be represented by final memories, erasure
must commute with compilation, measured object-code cost must respect
the priced traces, and the checker must agree with brute-force oracles
on small codes.

Everything is deterministic in the seed.  A fault-injection mode
(``mutate="swap-bge"``) compiles comparisons with inverted operand
order, which the simulation checks must catch; it exists to demonstrate
the suite is not vacuous.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from . import costcheck, imp, labelling, mips, passes, vm
from .core import COST_VAR, FuelExhausted, Label, Store
from .costcheck import Cfg, CostMap
from .mips import MachineConfig

VARIABLES = ("x", "y", "z", "w")

# ---------------------------------------------------------------------------
# Random program generation


def _gen_expr(rng: random.Random, depth: int = 0) -> imp.Expr:
    roll = rng.random()
    if depth >= 3 or roll < 0.4:
        if roll < 0.55:
            return imp.Var(rng.choice(VARIABLES))
        return imp.Const(rng.randint(-8, 8))
    return imp.Add(_gen_expr(rng, depth + 1), _gen_expr(rng, depth + 1))


def _gen_bool(rng: random.Random) -> imp.BoolCond:
    return imp.Less(_gen_expr(rng), _gen_expr(rng))


def _gen_leaf(rng: random.Random, protect: frozenset[str]) -> imp.Stmt:
    targets = [v for v in VARIABLES if v not in protect]
    if not targets or rng.random() < 0.15:
        return imp.Skip()
    return imp.Assign(rng.choice(targets), _gen_expr(rng))


def _gen_stmt(rng: random.Random, size: int, protect: frozenset[str], depth: int) -> imp.Stmt:
    if size <= 1 or depth >= 5:
        return _gen_leaf(rng, protect)
    roll = rng.random()
    if roll < 0.50:
        left = rng.randint(1, size - 1)
        return imp.Seq(
            _gen_stmt(rng, left, protect, depth + 1),
            _gen_stmt(rng, size - left, protect, depth + 1),
        )
    if roll < 0.70:
        half = max(1, (size - 1) // 2)
        return imp.If(
            _gen_bool(rng),
            _gen_stmt(rng, half, protect, depth + 1),
            _gen_stmt(rng, max(1, size - 1 - half), protect, depth + 1),
        )
    if roll < 0.85:
        free = [v for v in VARIABLES if v not in protect]
        if free and rng.random() < 0.7:
            # biased toward termination: the guard variable only grows
            v = rng.choice(free)
            bound = rng.randint(0, 5)
            step = imp.Assign(v, imp.Add(imp.Var(v), imp.Const(rng.randint(1, 3))))
            inner = size - 2
            body: imp.Stmt = step
            if inner >= 1:
                body = imp.Seq(
                    _gen_stmt(rng, inner, protect | {v}, depth + 1), step
                )
            return imp.While(imp.Less(imp.Var(v), imp.Const(bound)), body)
        return imp.While(_gen_bool(rng), _gen_stmt(rng, size - 1, protect, depth + 1))
    return _gen_leaf(rng, protect)


def generate_program(rng: random.Random, max_size: int) -> imp.Program:
    """A random unlabelled program with geometrically distributed size."""
    size = 1
    while size < max_size and rng.random() < 0.9:
        size += 1
    return imp.Program(_gen_stmt(rng, size, frozenset(), 0))


def generate_any_stmt(rng: random.Random, size: int, depth: int = 0) -> imp.Stmt:
    """Arbitrary statements including labels anywhere; for syntax testing."""
    if rng.random() < 0.2 and depth < 6:
        return imp.Labelled(Label(rng.randint(0, 9)), generate_any_stmt(rng, size, depth + 1))
    base = _gen_stmt(rng, size, frozenset(), depth)
    return base


def generate_store(rng: random.Random, variables: list[str]) -> Store:
    bindings = {v: rng.randint(-10, 10) for v in variables}
    bindings[COST_VAR] = 0
    return Store(bindings)


# ---------------------------------------------------------------------------
# Brute-force oracles (deliberately naive; used to cross-check the checker)


def enumerate_simple_paths(cfg: Cfg) -> dict[Label, list[tuple[int, ...]]]:
    """Every simple path of every label, by exhaustive extension."""
    paths: dict[Label, list[tuple[int, ...]]] = {}

    def stops(v: int) -> bool:
        return cfg.is_labelled(v) or cfg.is_leaf(v)

    def extend(path: list[int], acc: list[tuple[int, ...]]) -> None:
        for nxt in cfg.succs[path[-1]]:
            if stops(nxt):
                acc.append(tuple(path))
            else:
                extend(path + [nxt], acc)

    for node in range(len(cfg)):
        lab = cfg.labels[node]
        if lab is None:
            continue
        acc = paths.setdefault(lab, [])
        if cfg.is_leaf(node):
            acc.append((node,))
        else:
            extend([node], acc)
    return paths


def brute_force_costmap(cfg: Cfg, mcfg: MachineConfig) -> tuple[CostMap, dict[Label, bool]]:
    """Label costs by explicit path enumeration, plus per-label ambiguity."""
    costs = [mcfg.cost(op) for op in cfg.opcodes]
    kappa: CostMap = {}
    ambiguous: dict[Label, bool] = {}
    for lab, paths in enumerate_simple_paths(cfg).items():
        prices = [sum(costs[v] for v in path) for path in paths]
        kappa[lab] = max(prices)
        ambiguous[lab] = len(set(prices)) > 1
    return kappa, ambiguous


def enumerate_cycles(cfg: Cfg) -> list[tuple[int, ...]]:
    """All elementary cycles, found by bounded DFS (fine for tiny graphs)."""
    cycles: list[tuple[int, ...]] = []

    def walk(start: int, path: list[int], visited: set[int]) -> None:
        for nxt in cfg.succs[path[-1]]:
            if nxt == start:
                cycles.append(tuple(path))
            elif nxt > start and nxt not in visited:
                visited.add(nxt)
                walk(start, path + [nxt], visited)
                visited.discard(nxt)

    for start in range(len(cfg)):
        walk(start, [start], {start})
    return cycles


def naive_check_sound(cfg: Cfg) -> bool:
    if len(cfg) == 0 or not cfg.is_labelled(0):
        return False
    return all(
        any(cfg.is_labelled(v) for v in cycle) for cycle in enumerate_cycles(cfg)
    )


# ---------------------------------------------------------------------------
# Recording interpreters (drive the public step functions, keep pc logs)


def _run_vm_recording(
    code: vm.VmCode, store: Store, fuel: int, heights: tuple[int, ...] | None
) -> tuple[Store, tuple[Label, ...], list[int]]:
    state = vm.VmState(0, (), store)
    trace: list[Label] = []
    pcs: list[int] = []
    for _ in range(fuel):
        if heights is not None and len(state.stack) != heights[state.pc]:
            raise vm.HeightMismatch(
                f"pc {state.pc}: stack height {len(state.stack)}, predicted {heights[state.pc]}"
            )
        if isinstance(code[state.pc], vm.Halt):
            if state.stack:
                raise vm.NonEmptyStackAtHalt(str(len(state.stack)))
            pcs.append(state.pc)
            return state.store, tuple(trace), pcs
        pcs.append(state.pc)
        state, lab = vm.step_vm(code, state)
        if lab is not None:
            trace.append(lab)
    raise FuelExhausted(f"no halt within {fuel} steps")


def _run_mips_recording(
    code: mips.MipsCode, mem: mips.Memory, cfg: MachineConfig, fuel: int
) -> tuple[mips.Memory, tuple[Label, ...], int, list[int]]:
    pc, total = 0, 0
    trace: list[Label] = []
    pcs: list[int] = []
    for _ in range(fuel):
        if isinstance(code[pc], mips.Halt):
            pcs.append(pc)
            total += cfg.cost("halt")
            return mem, tuple(trace), total, pcs
        pcs.append(pc)
        pc, mem, lab, cost = mips.step_mips(code, pc, mem, cfg)
        total += cost
        if lab is not None:
            trace.append(lab)
    raise FuelExhausted(f"no halt within {fuel} steps")


# ---------------------------------------------------------------------------
# The property harness


@dataclass
class PropertyStats:
    passed: int = 0
    failed: int = 0
    first_failure: str | None = None


@dataclass
class SelftestReport:
    seed: int
    count: int
    max_size: int
    b_set: tuple[int, ...]
    trace_compare: str
    mutate: str | None
    cases: int = 0
    diverged: int = 0
    properties: dict[str, PropertyStats] = field(default_factory=dict)

    def record(self, name: str, ok: bool, context: str) -> None:
        stats = self.properties.setdefault(name, PropertyStats())
        if ok:
            stats.passed += 1
        else:
            stats.failed += 1
            if stats.first_failure is None:
                stats.first_failure = context

    def failed_properties(self) -> list[str]:
        return sorted(n for n, s in self.properties.items() if s.failed)

    @property
    def ok(self) -> bool:
        return not self.failed_properties()

    def format_summary(self) -> str:
        lines = [
            f"selftest seed={self.seed} count={self.count} max-size={self.max_size} "
            f"b={','.join(map(str, self.b_set))} compare={self.trace_compare} "
            f"mutate={self.mutate or 'none'}",
            f"cases: {self.cases}  diverged-runs-skipped: {self.diverged}",
            "",
            f"{'property':42} {'pass':>8} {'fail':>8}",
        ]
        for name in sorted(self.properties):
            stats = self.properties[name]
            lines.append(f"{name:42} {stats.passed:>8} {stats.failed:>8}")
        failing = self.failed_properties()
        for name in failing:
            lines.append("")
            lines.append(f"counterexample for {name}:")
            lines.append(f"  {self.properties[name].first_failure}")
        lines.append("")
        lines.append("result: ok" if not failing else f"result: FAIL ({len(failing)} properties)")
        return "\n".join(lines) + "\n"


def _traces_equal(a: tuple[Label, ...], b: tuple[Label, ...], mode: str) -> bool:
    if mode == "multiset":
        return Counter(a) == Counter(b)
    return a == b


def _count_imp_run(
    program: imp.Program, store: Store, fuel: int
) -> tuple[Store, tuple[Label, ...], int] | None:
    """Run, returning (store, trace, steps); None when fuel runs out."""
    config = imp.ImpConfig(program.body, (), store)
    trace: list[Label] = []
    steps = 0
    while not imp.is_terminal(config):
        if steps >= fuel:
            return None
        config, lab = imp.step_imp(config)
        if lab is not None:
            trace.append(lab)
        steps += 1
    return config.store, tuple(trace), steps


def _check_bool_block_contract(rng: random.Random, report: SelftestReport, context: str) -> None:
    """Compiled conditions fall through on true and jump by k on false,
    leaving stack and store untouched."""
    cond = _gen_bool(rng)
    k = rng.randint(0, 3)
    prefix = passes.compile_stmt(_gen_stmt(rng, rng.randint(1, 3), frozenset(), 4))
    guard = passes.compile_bool(cond, k)
    code = prefix + guard + (vm.Branch(0),) * (k + 2)
    store = generate_store(rng, list(VARIABLES))
    sigma = tuple(rng.randint(-5, 5) for _ in range(rng.randint(0, 2)))
    state = vm.VmState(len(prefix), sigma, store)
    emitted = []
    for _ in range(len(guard)):
        state, lab = vm.step_vm(code, state)
        if lab is not None:
            emitted.append(lab)
    after = len(prefix) + len(guard)
    expected = after if imp.eval_bool(cond, store) else after + k
    ok = (
        state.pc == expected
        and state.stack == sigma
        and state.store == store
        and not emitted
    )
    report.record("passes.bool_block_contract", ok, context)


def run_selftest(
    seed: int = 0,
    count: int = 500,
    max_size: int = 30,
    b_set: tuple[int, ...] = (0, 1, 2, 4, 8),
    trace_compare: str = "sequence",
    mutate: str | None = None,
    imp_fuel: int = 400,
    stop_on_failure: bool = False,
) -> SelftestReport:
    """Run every cross-stage property over ``count`` random programs."""
    if trace_compare not in ("sequence", "multiset"):
        raise ValueError(f"unknown trace comparison {trace_compare!r}")
    if mutate not in (None, "swap-bge"):
        raise ValueError(f"unknown mutation {mutate!r}")
    report = SelftestReport(
        seed=seed,
        count=count,
        max_size=max_size,
        b_set=tuple(b_set),
        trace_compare=trace_compare,
        mutate=mutate,
    )
    swap = mutate == "swap-bge"
    vm_fuel = 64 * imp_fuel
    mips_fuel = 4 * vm_fuel

    for idx in range(count):
        rng = random.Random(f"{seed}:{idx}")
        program = generate_program(rng, max_size)
        source = imp.print_imp(program)
        store0 = generate_store(rng, sorted(imp.variables_of(program)))
        context = f"case {idx} (store {store0.bindings}): {source}"
        report.cases += 1

        report.record(
            "imp.print_parse_roundtrip", imp.parse_imp(source) == program, context
        )
        start = imp.ImpConfig(program.body, (), store0)
        if not imp.is_terminal(start):
            report.record(
                "imp.step_deterministic", imp.step_imp(start) == imp.step_imp(start), context
            )
        _check_bool_block_contract(rng, report, context)

        plain = _count_imp_run(program, store0, imp_fuel)
        if plain is None:
            report.diverged += 1
        else:
            s_plain, tr_plain, _ = plain
            report.record("imp.unlabelled_trace_empty", tr_plain == (), context)

        vm_plain = passes.compile_program(program)

        # source-level fragment heights: expressions raise the stack by
        # exactly one, whole statements leave it at zero
        expr_code = passes.compile_expr(_gen_expr(rng))
        start = rng.randint(0, 3)
        stmt_code = passes.compile_stmt(program.body)
        try:
            eh = vm.infer_heights(expr_code, initial=start)
            ok_fragment = eh[-1] == start + 1
            if stmt_code:
                sh = vm.infer_heights(stmt_code, allow_end_target=True)
                ok_fragment = ok_fragment and sh[-1] == 0
        except vm.NotWellFormed:
            ok_fragment = False
        report.record("vm.fragment_heights", ok_fragment, context)

        for lname, label_fn in (("simple", labelling.label_simple), ("precise", labelling.label_precise)):
            lctx = f"{context} [labelling={lname}]"
            labelled = label_fn(program)
            labs = imp.labels_of(labelled.body)
            report.record("label.fresh_distinct", len(labs) == len(set(labs)), lctx)
            report.record("label.erase_identity", imp.erase_imp(labelled) == program, lctx)
            report.record(
                "imp.print_parse_roundtrip",
                imp.parse_imp(imp.print_imp(labelled)) == labelled,
                lctx,
            )

            vm_lab = passes.compile_program(labelled)
            try:
                heights = vm.infer_heights(vm_lab)
                report.record("vm.compiled_well_formed", True, lctx)
            except vm.NotWellFormed as exc:
                report.record("vm.compiled_well_formed", False, f"{lctx}: {exc}")
                continue
            report.record(
                "vm.heights_order_independent",
                vm.infer_heights(vm_lab, order="reverse") == heights,
                lctx,
            )
            erased_vm = vm.erase_vm(vm_lab)
            report.record("vm.erase_commutes", erased_vm == vm_plain, lctx)
            report.record("vm.erase_idempotent", vm.erase_vm(erased_vm) == erased_vm, lctx)

            # labelled source run; everything downstream compares to it
            run_info = None
            if plain is not None:
                lab_run = _count_imp_run(labelled, store0, 2 * imp_fuel + 16)
                if lab_run is None:
                    report.record("imp.erasure_preserves_runs", False, lctx)
                else:
                    s_lab, tr_lab, lab_steps = lab_run
                    report.record("imp.erasure_preserves_runs", s_lab == s_plain, lctx)
                    report.record("imp.trace_bounded_by_steps", len(tr_lab) <= lab_steps, lctx)
                    try:
                        s_vm, tr_vm, vm_pcs = _run_vm_recording(
                            vm_lab, store0, vm_fuel, heights
                        )
                        report.record("vm.height_prediction", True, lctx)
                        report.record(
                            "vm.simulates_source",
                            s_vm == s_lab and _traces_equal(tr_vm, tr_lab, trace_compare),
                            lctx,
                        )
                        run_info = (s_lab, tr_lab, s_vm, tr_vm, vm_pcs)
                    except vm.HeightMismatch as exc:
                        report.record("vm.height_prediction", False, f"{lctx}: {exc}")
                    except (vm.VmError, FuelExhausted) as exc:
                        report.record("vm.simulates_source", False, f"{lctx}: {exc}")
                    try:
                        s_erased, tr_erased = vm.run_vm(erased_vm, store0, vm_fuel)
                        report.record(
                            "vm.erase_preserves_runs",
                            plain is not None
                            and s_erased == s_plain
                            and tr_erased == (),
                            lctx,
                        )
                    except (vm.VmError, FuelExhausted) as exc:
                        report.record("vm.erase_preserves_runs", False, f"{lctx}: {exc}")

            # instrumentation against an arbitrary pricing
            if run_info is not None:
                s_lab, tr_lab, *_ = run_info
                arbitrary = {lab: rng.randint(0, 5) for lab in labs}
                instrumented = labelling.instrument(labelled, arbitrary)
                inst_run = _count_imp_run(instrumented, store0, 4 * imp_fuel + 64)
                if inst_run is None:
                    report.record("annotate.instrumented_matches_trace", False, lctx)
                else:
                    s_inst, tr_inst, _ = inst_run
                    delta = s_inst.get(COST_VAR) - store0.get(COST_VAR)
                    ok = (
                        tr_inst == ()
                        and delta == costcheck.trace_cost(arbitrary, tr_lab)
                        and s_inst.without(COST_VAR) == s_lab.without(COST_VAR)
                    )
                    report.record("annotate.instrumented_matches_trace", ok, lctx)

            for b in b_set:
                bctx = f"{lctx} [b={b}]"
                cfg = MachineConfig(b=b)
                mips_lab, pmap = passes.compile_vm(vm_lab, cfg, swap_bge=swap)
                mips_plain, _ = passes.compile_vm(vm_plain, cfg, swap_bge=swap)
                erased_mips = mips.erase_mips(mips_lab)
                report.record(
                    "mips.erase_commutes",
                    erased_mips == mips_plain
                    and erased_mips == passes.compile_vm(erased_vm, cfg, swap_bge=swap)[0],
                    bctx,
                )
                report.record(
                    "mips.erase_idempotent",
                    mips.erase_mips(erased_mips) == erased_mips,
                    bctx,
                )

                chk = costcheck.analyze(mips_lab, cfg)
                report.record("check.sound_labellings", chk.sound, bctx)

                cfg_graph = costcheck.build_cfg(mips_lab)
                if len(mips_lab) <= 12 and chk.sound and chk.kappa is not None:
                    oracle_kappa, oracle_ambiguous = brute_force_costmap(cfg_graph, cfg)
                    warned = {lab for lab, _, _ in chk.warnings}
                    ok = oracle_kappa == chk.kappa and all(
                        (lab in warned) == oracle_ambiguous[lab] for lab in oracle_kappa
                    )
                    report.record("check.oracle_costmap", ok, bctx)
                if len(mips_lab) <= 10:
                    report.record(
                        "check.oracle_soundness",
                        naive_check_sound(cfg_graph) == chk.sound,
                        bctx,
                    )
                if chk.sound and chk.kappa is not None:
                    op = rng.choice(sorted(mips.DEFAULT_COSTS))
                    bumped = cfg.with_costs({op: cfg.cost(op) + rng.randint(1, 3)})
                    kappa2, _ = costcheck.compute_costmap(cfg_graph, bumped)
                    report.record(
                        "check.kappa_monotone",
                        all(kappa2[lab] >= chk.kappa[lab] for lab in chk.kappa),
                        bctx,
                    )

                if run_info is None or not chk.sound or chk.kappa is None:
                    continue
                s_lab, tr_lab, s_vm, tr_vm, vm_pcs = run_info
                mem0 = mips.init_memory(store0, cfg)
                try:
                    mem1, tr_m, cost, mips_pcs = _run_mips_recording(
                        mips_lab, mem0, cfg, mips_fuel
                    )
                except (mips.MipsError, FuelExhausted) as exc:
                    report.record("mips.simulates_stack", False, f"{bctx}: {exc}")
                    continue
                report.record(
                    "mips.simulates_stack",
                    _traces_equal(tr_m, tr_vm, trace_compare)
                    and mips.represents(mem1, (), s_vm, cfg),
                    bctx,
                )
                starts = set(pmap[:-1])
                visited_starts = [pc for pc in mips_pcs if pc in starts]
                report.record(
                    "mips.block_lockstep",
                    visited_starts == [pmap[i] for i in vm_pcs],
                    bctx,
                )
                recount = sum(
                    cfg.cost(mips.opcode(mips_lab[pc])) for pc in mips_pcs[:-1]
                ) + cfg.cost("halt")
                report.record("mips.cost_additive", recount == cost, bctx)
                try:
                    mem_e, tr_e, cost_e = mips.run_mips(erased_mips, mem0, cfg, mips_fuel)
                    report.record(
                        "mips.erase_preserves_runs",
                        mem_e == mem1 and tr_e == () and cost_e == cost,
                        bctx,
                    )
                except (mips.MipsError, FuelExhausted) as exc:
                    report.record("mips.erase_preserves_runs", False, f"{bctx}: {exc}")

                report.record(
                    "check.cost_bound",
                    cost <= costcheck.trace_cost(chk.kappa, tr_m),
                    bctx,
                )
                if chk.precise:
                    report.record(
                        "check.cost_exact_when_precise",
                        cost == costcheck.trace_cost(chk.kappa, tr_m),
                        bctx,
                    )

                # the full annotation pipeline at this machine configuration
                annotated = labelling.instrument(labelled, chk.kappa)
                ann_run = _count_imp_run(annotated, store0, 4 * imp_fuel + 64)
                if ann_run is None:
                    report.record("annotate.delta_matches_trace_cost", False, bctx)
                    continue
                s_ann, _, _ = ann_run
                delta = s_ann.get(COST_VAR) - store0.get(COST_VAR)
                report.record(
                    "annotate.delta_matches_trace_cost",
                    delta == costcheck.trace_cost(chk.kappa, tr_m),
                    bctx,
                )
                report.record(
                    "annotate.transparent",
                    s_ann.without(COST_VAR) == s_plain.without(COST_VAR),
                    bctx,
                )
                try:
                    _, _, cost_plain = mips.run_mips(mips_plain, mem0, cfg, mips_fuel)
                    bound_ok = cost_plain <= delta
                    if chk.precise:
                        bound_ok = bound_ok and cost_plain == delta
                    report.record("annotate.cost_bound", bound_ok, bctx)
                except (mips.MipsError, FuelExhausted) as exc:
                    report.record("annotate.cost_bound", False, f"{bctx}: {exc}")

        if stop_on_failure and not report.ok:
            break
    return report
