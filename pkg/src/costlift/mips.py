"""The register/memory target machine: semantics, costs, labels, erasure.

The machine has two scratch registers ``A`` and ``B``, a register file
``R0 .. R<b-1>`` whose size ``b`` comes from the machine configuration,
and a memory over symbolic locations: one location per program variable
(``l_x``) and one per spilled stack slot (``l_<n>``, reserved only for
``n >= b``).  Every instruction carries a configurable cost; by default
``nop`` and ``halt`` are free and everything else costs one unit, so a
run's total cost counts the ordinary instructions it crosses.

Branch offsets use the same relative convention as the stack machine:
the target of an offset ``k`` at position ``i`` is ``i + k + 1``.
``bge R R' k`` jumps exactly when ``m(R) >= m(R')``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from . import core
from .core import FuelExhausted, Label, Trace

# ---------------------------------------------------------------------------
# Registers, locations, instructions

#: Registers are plain strings: "A", "B", or "R<k>".
Reg = str

_REG_RE = re.compile(r"A\Z|B\Z|R(\d+)\Z")


@dataclass(frozen=True, slots=True)
class VarLoc:
    name: str


@dataclass(frozen=True, slots=True)
class SlotLoc:
    slot: int


Loc = VarLoc | SlotLoc


@dataclass(frozen=True, slots=True)
class LoadI:
    reg: Reg
    value: int


@dataclass(frozen=True, slots=True)
class Load:
    reg: Reg
    loc: Loc


@dataclass(frozen=True, slots=True)
class Store:
    reg: Reg
    loc: Loc


@dataclass(frozen=True, slots=True)
class AddR:
    dst: Reg
    src1: Reg
    src2: Reg


@dataclass(frozen=True, slots=True)
class Branch:
    offset: int


@dataclass(frozen=True, slots=True)
class Bge:
    left: Reg
    right: Reg
    offset: int


@dataclass(frozen=True, slots=True)
class Halt:
    pass


@dataclass(frozen=True, slots=True)
class Nop:
    label: Label


MipsInstr = LoadI | Load | Store | AddR | Branch | Bge | Halt | Nop
MipsCode = tuple[MipsInstr, ...]

_OPCODES = {
    LoadI: "loadi",
    Load: "load",
    Store: "store",
    AddR: "add",
    Branch: "branch",
    Bge: "bge",
    Halt: "halt",
    Nop: "nop",
}


def opcode(instr: MipsInstr) -> str:
    return _OPCODES[type(instr)]


# ---------------------------------------------------------------------------
# Machine configuration

DEFAULT_COSTS: Mapping[str, int] = {
    "loadi": 1,
    "load": 1,
    "store": 1,
    "add": 1,
    "branch": 1,
    "bge": 1,
    "halt": 0,
    "nop": 0,
}


@dataclass(frozen=True)
class MachineConfig:
    """Register-file size and the per-opcode cost model."""

    b: int = 4
    costs: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_COSTS))

    def __post_init__(self) -> None:
        if self.b < 0:
            raise ValueError(f"register file size must be a natural: {self.b}")
        unknown = set(self.costs) - set(DEFAULT_COSTS)
        if unknown:
            raise ValueError(f"unknown opcodes in cost model: {sorted(unknown)}")
        for op, c in self.costs.items():
            if c < 0:
                raise ValueError(f"cost of {op} must be a natural: {c}")

    def cost(self, op: str) -> int:
        return self.costs.get(op, DEFAULT_COSTS[op])

    def with_costs(self, overrides: Mapping[str, int]) -> "MachineConfig":
        merged = dict(DEFAULT_COSTS)
        merged.update(self.costs)
        merged.update(overrides)
        return MachineConfig(b=self.b, costs=merged)


# ---------------------------------------------------------------------------
# Memory


class Memory:
    """Total map over registers and locations, defaulting to 0; immutable."""

    __slots__ = ("_regs", "_mem")

    def __init__(
        self,
        regs: Mapping[Reg, int] | None = None,
        mem: Mapping[Loc, int] | None = None,
    ):
        self._regs = {r: v for r, v in dict(regs or {}).items() if v != 0}
        self._mem = {l: v for l, v in dict(mem or {}).items() if v != 0}

    def reg(self, r: Reg) -> int:
        return self._regs.get(r, 0)

    def loc(self, l: Loc) -> int:
        return self._mem.get(l, 0)

    def set_reg(self, r: Reg, v: int) -> "Memory":
        regs = dict(self._regs)
        if v == 0:
            regs.pop(r, None)
        else:
            regs[r] = v
        out = Memory.__new__(Memory)
        out._regs, out._mem = regs, self._mem
        return out

    def set_loc(self, l: Loc, v: int) -> "Memory":
        mem = dict(self._mem)
        if v == 0:
            mem.pop(l, None)
        else:
            mem[l] = v
        out = Memory.__new__(Memory)
        out._regs, out._mem = self._regs, mem
        return out

    @property
    def registers(self) -> dict[Reg, int]:
        return dict(self._regs)

    @property
    def locations(self) -> dict[Loc, int]:
        return dict(self._mem)

    def variable_bindings(self) -> dict[str, int]:
        """The store image held in the variable locations."""
        return {l.name: v for l, v in self._mem.items() if isinstance(l, VarLoc)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Memory):
            return NotImplemented
        return self._regs == other._regs and self._mem == other._mem

    def __repr__(self) -> str:
        regs = ", ".join(f"{r}={v}" for r, v in sorted(self._regs.items()))
        mem = ", ".join(f"{l}={v}" for l, v in sorted(self._mem.items(), key=repr))
        return f"Memory({regs}; {mem})"


# ---------------------------------------------------------------------------
# Errors


class MipsError(Exception):
    pass


class MipsPcOutOfRange(MipsError):
    pass


class MipsHalted(MipsError):
    pass


class ReservedSlotViolation(MipsError):
    """A slot location below the register file size was addressed."""


class BadRegister(MipsError):
    """A register outside the configured file was addressed."""


# ---------------------------------------------------------------------------
# Semantics


def _check_reg(r: Reg, cfg: MachineConfig) -> Reg:
    m = _REG_RE.fullmatch(r)
    if not m:
        raise BadRegister(f"unknown register {r!r}")
    if m.group(1) is not None and int(m.group(1)) >= cfg.b:
        raise BadRegister(f"register {r} outside file R0..R{cfg.b - 1}")
    return r


def _check_loc(l: Loc, cfg: MachineConfig) -> Loc:
    if isinstance(l, SlotLoc) and l.slot < cfg.b:
        raise ReservedSlotViolation(
            f"slot location l_{l.slot} is reserved only for slots >= {cfg.b}"
        )
    return l


def _moved(code: MipsCode, pc: int) -> int:
    if not 0 <= pc < len(code):
        raise MipsPcOutOfRange(f"jump to position {pc} outside 0..{len(code) - 1}")
    return pc


def step_mips(
    code: MipsCode, pc: int, mem: Memory, cfg: MachineConfig
) -> tuple[int, Memory, Label | None, int]:
    """One transition; returns the new pc, memory, emitted label, and cost."""
    if not 0 <= pc < len(code):
        raise MipsPcOutOfRange(f"pc {pc} outside 0..{len(code) - 1}")
    instr = code[pc]
    cost = cfg.cost(opcode(instr))
    match instr:
        case LoadI(r, n):
            return _moved(code, pc + 1), mem.set_reg(_check_reg(r, cfg), n), None, cost
        case Load(r, l):
            value = mem.loc(_check_loc(l, cfg))
            return _moved(code, pc + 1), mem.set_reg(_check_reg(r, cfg), value), None, cost
        case Store(r, l):
            value = mem.reg(_check_reg(r, cfg))
            return _moved(code, pc + 1), mem.set_loc(_check_loc(l, cfg), value), None, cost
        case AddR(dst, s1, s2):
            value = mem.reg(_check_reg(s1, cfg)) + mem.reg(_check_reg(s2, cfg))
            return _moved(code, pc + 1), mem.set_reg(_check_reg(dst, cfg), value), None, cost
        case Branch(k):
            return _moved(code, pc + k + 1), mem, None, cost
        case Bge(r1, r2, k):
            jump = mem.reg(_check_reg(r1, cfg)) >= mem.reg(_check_reg(r2, cfg))
            return _moved(code, pc + (k + 1 if jump else 1)), mem, None, cost
        case Nop(lab):
            return _moved(code, pc + 1), mem, lab, cost
        case Halt():
            raise MipsHalted(f"halt at {pc} is not steppable")
    raise TypeError(f"not an instruction: {instr!r}")


def mips_steps(
    code: MipsCode, mem: Memory, cfg: MachineConfig
) -> Iterator[tuple[int, Memory, Label | None, int]]:
    """Yield (pc, memory, label, cost) after each step until halt is reached."""
    pc = 0
    while not isinstance(code[pc], Halt):
        pc, mem, lab, cost = step_mips(code, pc, mem, cfg)
        yield pc, mem, lab, cost


def run_mips(
    code: MipsCode, mem: Memory, cfg: MachineConfig, fuel: int
) -> tuple[Memory, Trace, int]:
    """Run from pc 0 until halt; the halt cost is charged exactly once."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    if not code:
        raise MipsPcOutOfRange("empty code has no instruction at pc 0")
    pc, total = 0, 0
    trace: list[Label] = []
    steps = 0
    while not isinstance(code[pc], Halt):
        if steps >= fuel:
            raise FuelExhausted(f"no halt within {fuel} steps")
        pc, mem, lab, cost = step_mips(code, pc, mem, cfg)
        total += cost
        if lab is not None:
            trace.append(lab)
        steps += 1
    total += cfg.cost("halt")
    return mem, tuple(trace), total


# ---------------------------------------------------------------------------
# The representation relation between memories and (stack, store) pairs


def init_memory(store: core.Store, cfg: MachineConfig) -> Memory:
    """A memory whose variable locations hold the store; all else 0."""
    del cfg  # the image does not depend on the register file size
    return Memory(mem={VarLoc(x): v for x, v in store.bindings.items()})


def represents(mem: Memory, stack: tuple[int, ...], store: core.Store, cfg: MachineConfig) -> bool:
    """Does ``mem`` realize the machine stack and the store?

    Variables live at their locations; stack slot ``i`` (counted from
    the bottom) lives in ``R<i>`` when ``i < b`` and at ``l_<i>``
    otherwise.
    """
    names = set(store.bindings)
    names.update(l.name for l in mem.locations if isinstance(l, VarLoc))
    if any(store.get(x) != mem.loc(VarLoc(x)) for x in names):
        return False
    for i, value in enumerate(stack):
        held = mem.reg(f"R{i}") if i < cfg.b else mem.loc(SlotLoc(i))
        if held != value:
            return False
    return True


# ---------------------------------------------------------------------------
# Label erasure (same offset arithmetic as the stack machine)


def erase_mips(code: MipsCode) -> MipsCode:
    """Drop every ``nop`` and recompute branch offsets accordingly."""
    nops_before = [0]
    for instr in code:
        nops_before.append(nops_before[-1] + isinstance(instr, Nop))

    def nops_in(a: int, b: int) -> int:  # inclusive interval [a, b]
        return nops_before[b + 1] - nops_before[a]

    def remap(i: int, k: int) -> int:
        return k - nops_in(i, i + k) if k >= 0 else k + nops_in(i + 1 + k, i)

    out: list[MipsInstr] = []
    for i, instr in enumerate(code):
        match instr:
            case Nop(_):
                continue
            case Branch(k):
                out.append(Branch(remap(i, k)))
            case Bge(r1, r2, k):
                out.append(Bge(r1, r2, remap(i, k)))
            case _:
                out.append(instr)
    return tuple(out)


# ---------------------------------------------------------------------------
# Textual form: one instruction per line


class MipsSyntaxError(Exception):
    pass


def _loc_str(l: Loc) -> str:
    return f"l_{l.name}" if isinstance(l, VarLoc) else f"l_{l.slot}"


def print_mips(code: MipsCode) -> str:
    lines = []
    for instr in code:
        match instr:
            case LoadI(r, n):
                lines.append(f"loadi {r} {n}")
            case Load(r, l):
                lines.append(f"load {r} {_loc_str(l)}")
            case Store(r, l):
                lines.append(f"store {r} {_loc_str(l)}")
            case AddR(d, s1, s2):
                lines.append(f"add {d} {s1} {s2}")
            case Branch(k):
                lines.append(f"branch {k}")
            case Bge(r1, r2, k):
                lines.append(f"bge {r1} {r2} {k}")
            case Nop(lab):
                lines.append(f"nop {lab}")
            case Halt():
                lines.append("halt")
    return "\n".join(lines) + ("\n" if lines else "")


_LABEL_TOKEN = re.compile(r"_l(\d+)\Z")
_IDENT_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _parse_reg(token: str, lineno: int) -> Reg:
    if not _REG_RE.fullmatch(token):
        raise MipsSyntaxError(f"line {lineno}: bad register {token!r}")
    return token


def _parse_loc(token: str, lineno: int) -> Loc:
    if not token.startswith("l_"):
        raise MipsSyntaxError(f"line {lineno}: bad location {token!r}")
    rest = token[2:]
    if rest.isdigit():
        return SlotLoc(int(rest))
    if _IDENT_TOKEN.fullmatch(rest):
        return VarLoc(rest)
    raise MipsSyntaxError(f"line {lineno}: bad location {token!r}")


def parse_mips(text: str) -> MipsCode:
    code: list[MipsInstr] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op, args = parts[0], parts[1:]

        def arity(k: int) -> None:
            if len(args) != k:
                raise MipsSyntaxError(f"line {lineno}: {op} takes {k} argument(s)")

        match op:
            case "loadi":
                arity(2)
                code.append(LoadI(_parse_reg(args[0], lineno), int(args[1])))
            case "load":
                arity(2)
                code.append(Load(_parse_reg(args[0], lineno), _parse_loc(args[1], lineno)))
            case "store":
                arity(2)
                code.append(Store(_parse_reg(args[0], lineno), _parse_loc(args[1], lineno)))
            case "add":
                arity(3)
                code.append(
                    AddR(
                        _parse_reg(args[0], lineno),
                        _parse_reg(args[1], lineno),
                        _parse_reg(args[2], lineno),
                    )
                )
            case "branch":
                arity(1)
                code.append(Branch(int(args[0])))
            case "bge":
                arity(3)
                code.append(
                    Bge(_parse_reg(args[0], lineno), _parse_reg(args[1], lineno), int(args[2]))
                )
            case "nop":
                arity(1)
                m = _LABEL_TOKEN.fullmatch(args[0])
                if not m:
                    raise MipsSyntaxError(f"line {lineno}: bad label {args[0]!r}")
                code.append(Nop(Label(int(m.group(1)))))
            case "halt":
                arity(0)
                code.append(Halt())
            case _:
                raise MipsSyntaxError(f"line {lineno}: unknown instruction {op!r}")
    return tuple(code)
