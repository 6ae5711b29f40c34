"""The two compilation passes: source -> stack code -> register code.

Expressions evaluate onto the stack; statements compile to straight-line
blocks glued with relative branches.  ``skip`` compiles to the empty
sequence and a labelled statement is prefixed with ``nop <label>``.

The second pass statically places stack slot ``j`` (counted from the
bottom) in register ``R<j>`` when ``j < b`` and at memory location
``l_<j>`` otherwise, using ``A``/``B`` as scratch for memory-resident
operands.  The comparison branch is emitted with its operands ordered so
that the register-machine jump fires exactly when the stack-machine jump
does (top operand >= second operand).  ``swap_bge=True`` flips that
operand order, inverting the decision whenever the operands differ; it
exists as a deliberate fault injection so the differential test suite
can prove it catches miscompilation.

Block lengths depend only on opcode and stack height, never on branch
offsets, so compilation runs in three passes: per-instruction block
lengths, then block start positions, then emission with resolved
offsets.
"""

from __future__ import annotations

from . import imp, mips, vm
from .mips import MachineConfig

# ---------------------------------------------------------------------------
# Source -> stack code


def compile_expr(e: imp.Expr) -> vm.VmCode:
    """Code that pushes the value of ``e``, leaving the rest of the stack alone."""
    match e:
        case imp.Var(x):
            return (vm.Var(x),)
        case imp.Const(n):
            return (vm.Cnst(n),)
        case imp.Add(a, b):
            return compile_expr(a) + compile_expr(b) + (vm.Add(),)
    raise TypeError(f"not an expression: {e!r}")


def compile_bool(b: imp.BoolCond, k: int) -> vm.VmCode:
    """Code that falls through when ``b`` holds and jumps by ``k`` when it fails.

    The right operand is evaluated first so the left operand ends up on
    top; ``bge`` then jumps exactly when left >= right.
    """
    match b:
        case imp.Less(e1, e2):
            return compile_expr(e2) + compile_expr(e1) + (vm.Bge(k),)
    raise TypeError(f"not a condition: {b!r}")


def compile_stmt(s: imp.Stmt) -> vm.VmCode:
    match s:
        case imp.Skip():
            return ()
        case imp.Assign(x, e):
            return compile_expr(e) + (vm.Setvar(x),)
        case imp.Seq(a, b):
            return compile_stmt(a) + compile_stmt(b)
        case imp.If(cond, then, orelse):
            code_then = compile_stmt(then)
            code_else = compile_stmt(orelse)
            guard = compile_bool(cond, len(code_then) + 1)
            return guard + code_then + (vm.Branch(len(code_else)),) + code_else
        case imp.While(cond, body):
            code_body = compile_stmt(body)
            guard = compile_bool(cond, len(code_body) + 1)
            back = -(len(guard) + len(code_body) + 1)
            return guard + code_body + (vm.Branch(back),)
        case imp.Labelled(lab, body):
            return (vm.Nop(lab),) + compile_stmt(body)
    raise TypeError(f"not a statement: {s!r}")


def compile_program(p: imp.Program) -> vm.VmCode:
    return compile_stmt(p.body) + (vm.Halt(),)


# ---------------------------------------------------------------------------
# Stack code -> register code


class MissingHalt(Exception):
    """The stack code to compile does not end in halt."""


def _slot_reg(j: int) -> mips.Reg:
    return f"R{j}"


def block_length(instr: vm.VmInstr, h: int, b: int) -> int:
    """Length of the block compiled for ``instr`` at stack height ``h``."""
    match instr:
        case vm.Cnst(_) | vm.Var(_):
            return 1 if h < b else 2
        case vm.Add():
            return 1 if h <= b else (2 if h == b + 1 else 4)
        case vm.Setvar(_):
            return 1 if h <= b else 2
        case vm.Bge(_):
            return 1 if h <= b else (2 if h == b + 1 else 3)
        case _:
            return 1


def position_map(code: vm.VmCode, heights: tuple[int, ...], cfg: MachineConfig) -> tuple[int, ...]:
    """Block start positions: ``p[i]`` is where instruction ``i``'s block begins."""
    p = [0]
    for i, instr in enumerate(code):
        p.append(p[-1] + block_length(instr, heights[i], cfg.b))
    return tuple(p)


def compile_vm_instr(
    i: int,
    code: vm.VmCode,
    heights: tuple[int, ...],
    cfg: MachineConfig,
    *,
    positions: tuple[int, ...] | None = None,
    swap_bge: bool = False,
) -> mips.MipsCode:
    """The block for instruction ``i`` of well-formed ``code``."""
    if positions is None:
        positions = position_map(code, heights, cfg)
    b = cfg.b
    h = heights[i]
    instr = code[i]

    def offset(k: int) -> int:
        return positions[i + k + 1] - positions[i + 1]

    match instr:
        case vm.Cnst(n):
            if h < b:
                return (mips.LoadI(_slot_reg(h), n),)
            return (mips.LoadI("A", n), mips.Store("A", mips.SlotLoc(h)))
        case vm.Var(x):
            if h < b:
                return (mips.Load(_slot_reg(h), mips.VarLoc(x)),)
            return (mips.Load("A", mips.VarLoc(x)), mips.Store("A", mips.SlotLoc(h)))
        case vm.Add():
            # operands at slots h-2 (second) and h-1 (top), result to slot h-2
            if h <= b:
                dst = _slot_reg(h - 2)
                return (mips.AddR(dst, dst, _slot_reg(h - 1)),)
            if h == b + 1:
                dst = _slot_reg(h - 2)
                return (mips.Load("A", mips.SlotLoc(h - 1)), mips.AddR(dst, dst, "A"))
            return (
                mips.Load("A", mips.SlotLoc(h - 1)),
                mips.Load("B", mips.SlotLoc(h - 2)),
                mips.AddR("A", "B", "A"),
                mips.Store("A", mips.SlotLoc(h - 2)),
            )
        case vm.Setvar(x):
            if h <= b:
                return (mips.Store(_slot_reg(h - 1), mips.VarLoc(x)),)
            return (mips.Load("A", mips.SlotLoc(h - 1)), mips.Store("A", mips.VarLoc(x)))
        case vm.Branch(k):
            return (mips.Branch(offset(k)),)
        case vm.Bge(k):
            # jump exactly when top (slot h-1) >= second (slot h-2)
            if h <= b:
                top, second = _slot_reg(h - 1), _slot_reg(h - 2)
                prefix: mips.MipsCode = ()
            elif h == b + 1:
                top, second = "A", _slot_reg(h - 2)
                prefix = (mips.Load("A", mips.SlotLoc(h - 1)),)
            else:
                top, second = "B", "A"
                prefix = (
                    mips.Load("A", mips.SlotLoc(h - 2)),
                    mips.Load("B", mips.SlotLoc(h - 1)),
                )
            if swap_bge:
                top, second = second, top
            return prefix + (mips.Bge(top, second, offset(k)),)
        case vm.Nop(lab):
            return (mips.Nop(lab),)
        case vm.Halt():
            return (mips.Halt(),)
    raise TypeError(f"not an instruction: {instr!r}")


def compile_vm(
    code: vm.VmCode, cfg: MachineConfig, *, swap_bge: bool = False
) -> tuple[mips.MipsCode, tuple[int, ...]]:
    """Compile well-formed stack code ending in halt.

    Returns the register code and the position map ``p`` of length
    ``len(code) + 1`` (``p[-1]`` is the output length).
    """
    heights = vm.infer_heights(code)
    if not isinstance(code[-1], vm.Halt):
        raise MissingHalt("stack code must end in halt")
    positions = position_map(code, heights, cfg)
    out: list[mips.MipsInstr] = []
    for i in range(len(code)):
        out.extend(
            compile_vm_instr(i, code, heights, cfg, positions=positions, swap_bge=swap_bge)
        )
    return tuple(out), positions
