"""Stack machine: stepping, running, height inference, erasure, text format."""

import random

import pytest

from costlift import imp, passes, vm
from costlift.core import FuelExhausted, Label, Store
from costlift.selftest import generate_program
from costlift.vm import (
    Add,
    Bge,
    Branch,
    Cnst,
    Halt,
    Halted,
    Nop,
    NonEmptyStackAtHalt,
    NotWellFormed,
    PcOutOfRange,
    Setvar,
    StackUnderflow,
    Var,
    VmState,
    erase_vm,
    infer_heights,
    parse_vm,
    print_vm,
    run_vm,
    step_vm,
)


class TestStep:
    def test_cnst_pushes(self):
        code = (Cnst(5), Halt())
        state, lab = step_vm(code, VmState(0, (), Store()))
        assert state == VmState(1, (5,), Store()) and lab is None

    def test_bge_falls_through_when_top_below_second(self):
        # top 3, second 7 (bottom-first representation): 3 < 7, no jump
        code = (Bge(1), Halt(), Halt())
        state, lab = step_vm(code, VmState(0, (7, 3), Store()))
        assert state == VmState(1, (), Store()) and lab is None

    def test_bge_jumps_when_top_at_least_second(self):
        code = (Bge(1), Halt(), Halt())
        state, _ = step_vm(code, VmState(0, (3, 7), Store()))
        assert state.pc == 2

    def test_nop_emits_label(self):
        code = (Nop(Label(1)), Halt())
        state, lab = step_vm(code, VmState(0, (), Store()))
        assert state == VmState(1, (), Store()) and lab == Label(1)

    def test_var_setvar(self):
        code = (Var("x"), Setvar("y"), Halt())
        state, _ = step_vm(code, VmState(0, (), Store({"x": 8})))
        assert state.stack == (8,)
        state, _ = step_vm(code, state)
        assert state.stack == () and state.store == Store({"x": 8, "y": 8})

    def test_add_pops_two_pushes_sum(self):
        code = (Add(), Halt())
        state, _ = step_vm(code, VmState(0, (1, 20, 22), Store()))
        assert state.stack == (1, 42)

    def test_underflow_errors(self):
        with pytest.raises(StackUnderflow):
            step_vm((Add(), Halt()), VmState(0, (1,), Store()))
        with pytest.raises(StackUnderflow):
            step_vm((Setvar("x"), Halt()), VmState(0, (), Store()))
        with pytest.raises(StackUnderflow):
            step_vm((Bge(0), Halt()), VmState(0, (1,), Store()))

    def test_halt_is_not_steppable(self):
        with pytest.raises(Halted):
            step_vm((Halt(),), VmState(0, (), Store()))

    def test_branch_out_of_range(self):
        with pytest.raises(PcOutOfRange):
            step_vm((Branch(5), Halt()), VmState(0, (), Store()))


class TestRun:
    def test_halt_only(self):
        s = Store({"q": 1})
        assert run_vm((Halt(),), s, 1) == (s, ())

    def test_cnst_setvar(self):
        final, trace = run_vm((Cnst(2), Setvar("x"), Halt()), Store(), 10)
        assert final == Store({"x": 2}) and trace == ()

    def test_compiled_labelled_program_agrees_with_source(self):
        program = imp.parse_imp("prog _l1: x := x + 1")
        code = passes.compile_program(program)
        source = imp.run_imp(program, Store({"x": 0}), 20)
        assert run_vm(code, Store({"x": 0}), 20) == source

    def test_nonempty_stack_at_halt(self):
        with pytest.raises(NonEmptyStackAtHalt):
            run_vm((Cnst(1), Halt()), Store(), 10)

    def test_fuel_exhaustion(self):
        with pytest.raises(FuelExhausted):
            run_vm((Branch(-1), Halt()), Store(), 50)

    def test_height_debug_flag(self):
        code = (Var("x"), Cnst(1), Add(), Setvar("x"), Halt())
        heights = infer_heights(code)
        final, _ = run_vm(code, Store({"x": 4}), 20, heights=heights)
        assert final == Store({"x": 5})


class TestHeights:
    def test_straight_line_example(self):
        code = (Var("x"), Cnst(1), Add(), Setvar("x"), Halt())
        assert infer_heights(code) == (0, 1, 2, 1, 0, 0)

    def test_halt_at_nonzero_height_rejected(self):
        with pytest.raises(NotWellFormed):
            infer_heights((Cnst(1), Halt()))

    def test_halt_not_last_rejected(self):
        with pytest.raises(NotWellFormed):
            infer_heights((Halt(), Halt()))

    def test_add_at_low_height_rejected(self):
        with pytest.raises(NotWellFormed) as err:
            infer_heights((Add(), Halt()))
        assert err.value.position == 0

    def test_setvar_needs_exactly_one(self):
        with pytest.raises(NotWellFormed):
            infer_heights((Cnst(1), Cnst(2), Setvar("x"), Halt()))

    def test_branch_to_halt_is_fine(self):
        assert infer_heights((Branch(0), Halt())) == (0, 0, 0)

    def test_branch_target_equal_to_length_rejected(self):
        with pytest.raises(NotWellFormed):
            infer_heights((Cnst(1), Setvar("x"), Branch(0)))

    def test_fragment_end_target_mode(self):
        code = passes.compile_stmt(
            imp.parse_imp("prog if x < 1 then { skip } else { x := 2 }").body
        )
        heights = infer_heights(code, allow_end_target=True)
        assert heights[0] == 0 and heights[-1] == 0

    def test_expression_fragment_raises_height_by_one(self):
        code = passes.compile_expr(imp.parse_imp("prog x := y + 2 + z").body.expr)
        for start in (0, 1, 3):
            heights = infer_heights(code, initial=start)
            assert heights[0] == start and heights[-1] == start + 1

    def test_compiled_programs_are_well_formed(self):
        rng = random.Random("vm-wf")
        for _ in range(50):
            program = generate_program(rng, 20)
            infer_heights(passes.compile_program(program))

    def test_reverse_order_matches_forward(self):
        rng = random.Random("vm-orders")
        for _ in range(50):
            code = passes.compile_program(generate_program(rng, 20))
            assert infer_heights(code) == infer_heights(code, order="reverse")

    def test_nop_is_height_neutral(self):
        code = (Nop(Label(0)), Cnst(1), Nop(Label(1)), Setvar("x"), Halt())
        assert infer_heights(code) == (0, 0, 1, 1, 0, 0)


class TestErase:
    def test_drop_lone_nop(self):
        assert erase_vm((Nop(Label(1)), Halt())) == (Halt(),)

    def test_forward_offset_shrinks_past_dropped_nop(self):
        code = (Branch(2), Cnst(1), Nop(Label(1)), Halt())
        assert erase_vm(code) == (Branch(1), Cnst(1), Halt())

    def test_backward_offset(self):
        # the loop below branches back over one nop; hand-recomputed: -8 + 1
        program = imp.parse_imp("prog while x < 3 do { _l7: x := x + 1 }")
        code = passes.compile_program(program)
        plain = passes.compile_program(imp.erase_imp(program))
        assert erase_vm(code) == plain
        back = [i for i in erase_vm(code) if isinstance(i, Branch)]
        assert back == [Branch(-8)]

    def test_idempotent(self):
        from costlift.labelling import label_precise

        rng = random.Random("vm-erase")
        for _ in range(30):
            code = passes.compile_program(label_precise(generate_program(rng, 15)))
            once = erase_vm(code)
            assert erase_vm(once) == once

    def test_commutes_with_compilation(self):
        from costlift.labelling import label_precise, label_simple

        rng = random.Random("vm-commute")
        for _ in range(60):
            program = generate_program(rng, 15)
            for label in (label_simple, label_precise):
                labelled = label(program)
                assert erase_vm(passes.compile_program(labelled)) == passes.compile_program(
                    imp.erase_imp(labelled)
                )

    def test_erasure_preserves_runs(self):
        program = imp.parse_imp("prog _l0: { while x < 4 do { _l1: x := x + 2 } }")
        code = passes.compile_program(program)
        final, trace = run_vm(code, Store(), 200)
        final2, trace2 = run_vm(erase_vm(code), Store(), 200)
        assert trace and not trace2 and final == final2 == Store({"x": 4})


class TestText:
    def test_print_golden(self):
        code = (Cnst(5), Var("x"), Setvar("x"), Add(), Branch(-3), Bge(2), Nop(Label(1)), Halt())
        assert print_vm(code) == "cnst 5\nvar x\nsetvar x\nadd\nbranch -3\nbge 2\nnop _l1\nhalt\n"

    def test_roundtrip(self):
        rng = random.Random("vm-text")
        for _ in range(40):
            code = passes.compile_program(generate_program(rng, 15))
            assert parse_vm(print_vm(code)) == code

    def test_parse_errors(self):
        with pytest.raises(vm.VmSyntaxError):
            parse_vm("frobnicate 3")
        with pytest.raises(vm.VmSyntaxError):
            parse_vm("cnst")
        with pytest.raises(vm.VmSyntaxError):
            parse_vm("nop l1")

    def test_comments_ignored(self):
        assert parse_vm("# intro\n\nhalt  # done\n") == (Halt(),)
