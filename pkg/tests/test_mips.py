"""Register machine: stepping, costs, memory representation, erasure, text."""

import random

import pytest

from costlift.core import FuelExhausted, Label, Store
from costlift.mips import (
    AddR,
    BadRegister,
    Bge,
    Branch,
    Halt,
    Load,
    LoadI,
    MachineConfig,
    Memory,
    MipsHalted,
    MipsSyntaxError,
    Nop,
    ReservedSlotViolation,
    SlotLoc,
    Store as StoreInstr,
    VarLoc,
    erase_mips,
    init_memory,
    opcode,
    parse_mips,
    print_mips,
    represents,
    run_mips,
    step_mips,
)

CFG = MachineConfig(b=2)

# the six-instruction object code of `prog _l0: x := x + 1` at b=2
WORKED_EXAMPLE = (
    Nop(Label(0)),
    Load("R0", VarLoc("x")),
    LoadI("R1", 1),
    AddR("R0", "R0", "R1"),
    StoreInstr("R0", VarLoc("x")),
    Halt(),
)


class TestStep:
    def test_loadi(self):
        code = (LoadI("R0", 5), Halt())
        pc, mem, lab, cost = step_mips(code, 0, Memory(), CFG)
        assert (pc, lab, cost) == (1, None, 1)
        assert mem.reg("R0") == 5

    def test_bge_ties_jump(self):
        code = (Bge("A", "B", 1), Halt(), Halt())
        mem = Memory(regs={"A": 2, "B": 2})
        pc, _, _, _ = step_mips(code, 0, mem, CFG)
        assert pc == 2

    def test_bge_less_falls_through(self):
        code = (Bge("A", "B", 1), Halt(), Halt())
        pc, _, _, _ = step_mips(code, 0, Memory(regs={"A": 1, "B": 2}), CFG)
        assert pc == 1

    def test_nop_emits_and_costs_nothing(self):
        code = (Nop(Label(1)), Halt())
        pc, mem, lab, cost = step_mips(code, 0, Memory(), CFG)
        assert (pc, mem, lab, cost) == (1, Memory(), Label(1), 0)

    def test_load_store_roundtrip(self):
        code = (Load("A", VarLoc("x")), StoreInstr("A", SlotLoc(3)), Halt())
        mem = Memory(mem={VarLoc("x"): 7})
        pc, mem, _, _ = step_mips(code, 0, mem, CFG)
        pc, mem, _, _ = step_mips(code, pc, mem, CFG)
        assert mem.loc(SlotLoc(3)) == 7

    def test_reserved_slot_violation(self):
        code = (Load("A", SlotLoc(1)), Halt())
        with pytest.raises(ReservedSlotViolation):
            step_mips(code, 0, Memory(), CFG)  # slot 1 < b=2

    def test_register_outside_file(self):
        code = (LoadI("R2", 1), Halt())
        with pytest.raises(BadRegister):
            step_mips(code, 0, Memory(), CFG)

    def test_halt_not_steppable(self):
        with pytest.raises(MipsHalted):
            step_mips((Halt(),), 0, Memory(), CFG)


class TestRun:
    def test_halt_only(self):
        mem, trace, cost = run_mips((Halt(),), Memory(), CFG, 1)
        assert (trace, cost) == ((), 0)
        assert mem == Memory()

    def test_worked_example_costs_four(self):
        mem0 = init_memory(Store({"x": 0}), CFG)
        mem, trace, cost = run_mips(WORKED_EXAMPLE, mem0, CFG, 100)
        assert trace == (Label(0),)
        assert cost == 4
        assert mem.loc(VarLoc("x")) == 1

    def test_erased_worked_example_same_cost_empty_trace(self):
        mem0 = init_memory(Store({"x": 0}), CFG)
        mem, trace, cost = run_mips(erase_mips(WORKED_EXAMPLE), mem0, CFG, 100)
        assert trace == () and cost == 4
        assert mem.loc(VarLoc("x")) == 1

    def test_custom_costs(self):
        cfg = CFG.with_costs({"load": 3, "halt": 2})
        mem0 = init_memory(Store({"x": 0}), cfg)
        _, _, cost = run_mips(WORKED_EXAMPLE, mem0, cfg, 100)
        assert cost == 3 + 1 + 1 + 1 + 2

    def test_fuel(self):
        with pytest.raises(FuelExhausted):
            run_mips((Branch(-1), Halt()), Memory(), CFG, 25)


class TestMemory:
    def test_init_memory_holds_store_image(self):
        mem = init_memory(Store({"x": 3}), CFG)
        assert mem.loc(VarLoc("x")) == 3
        assert mem.registers == {} and mem.locations == {VarLoc("x"): 3}

    def test_init_memory_of_empty_store_is_all_zero(self):
        assert init_memory(Store(), CFG) == Memory()

    def test_init_memory_represents_empty_stack(self):
        rng = random.Random("mips-repr")
        for _ in range(25):
            store = Store({v: rng.randint(-9, 9) for v in "xyzw"})
            assert represents(init_memory(store, CFG), (), store, CFG)

    def test_represents_spilled_slot(self):
        cfg = MachineConfig(b=1)
        store = Store({"x": 5})
        mem = Memory(regs={"R0": 10}, mem={SlotLoc(1): 20, VarLoc("x"): 5})
        assert represents(mem, (10, 20), store, cfg)  # 10 bottom, 20 top

    def test_represents_rejects_wrong_register(self):
        cfg = MachineConfig(b=1)
        store = Store({"x": 5})
        mem = Memory(regs={"R0": 99}, mem={SlotLoc(1): 20, VarLoc("x"): 5})
        assert not represents(mem, (10, 20), store, cfg)

    def test_represents_rejects_wrong_variable(self):
        mem = Memory(mem={VarLoc("x"): 4})
        assert not represents(mem, (), Store({"x": 3}), CFG)
        assert not represents(Memory(), (), Store({"x": 3}), CFG)

    def test_total_function_equality(self):
        assert Memory(regs={"A": 0}) == Memory()
        assert Store({"x": 0}) == Store()


class TestErase:
    def test_drop_lone_nop(self):
        assert erase_mips((Nop(Label(1)), Halt())) == (Halt(),)

    def test_forward_offset(self):
        code = (Branch(2), LoadI("A", 1), Nop(Label(1)), Halt())
        assert erase_mips(code) == (Branch(1), LoadI("A", 1), Halt())

    def test_backward_offset(self):
        code = (Nop(Label(0)), LoadI("A", 1), Bge("A", "B", -2), Halt())
        # target of the bge is position 1 after the leading nop is dropped
        assert erase_mips(code) == (LoadI("A", 1), Bge("A", "B", -2), Halt())

    def test_backward_offset_over_nop(self):
        code = (LoadI("A", 1), Nop(Label(0)), Bge("A", "B", -3), Halt())
        # old target 0; one nop inside [0, 2] closes the gap by one
        assert erase_mips(code) == (LoadI("A", 1), Bge("A", "B", -2), Halt())

    def test_idempotent(self):
        code = (Nop(Label(0)), Branch(1), LoadI("A", 1), Nop(Label(1)), Halt())
        once = erase_mips(code)
        assert erase_mips(once) == once


class TestText:
    def test_print_golden(self):
        code = (
            LoadI("R0", 5),
            Load("A", VarLoc("x")),
            StoreInstr("R1", SlotLoc(7)),
            AddR("R0", "R0", "R1"),
            Branch(-4),
            Bge("A", "B", 2),
            Nop(Label(1)),
            Halt(),
        )
        expected = (
            "loadi R0 5\nload A l_x\nstore R1 l_7\nadd R0 R0 R1\n"
            "branch -4\nbge A B 2\nnop _l1\nhalt\n"
        )
        assert print_mips(code) == expected
        assert parse_mips(expected) == code

    def test_location_kinds(self):
        code = parse_mips("load A l_x1\nstore B l_12\nhalt")
        assert code[0].loc == VarLoc("x1")
        assert code[1].loc == SlotLoc(12)

    def test_parse_errors(self):
        with pytest.raises(MipsSyntaxError):
            parse_mips("loadi Q 5")
        with pytest.raises(MipsSyntaxError):
            parse_mips("load A x")
        with pytest.raises(MipsSyntaxError):
            parse_mips("bge A B")

    def test_opcode_names(self):
        assert [opcode(i) for i in WORKED_EXAMPLE] == [
            "nop",
            "load",
            "loadi",
            "add",
            "store",
            "halt",
        ]
