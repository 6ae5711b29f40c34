"""costlift: a toy compiler workbench with verified-by-checking cost labels.

A small imperative language compiles through a stack machine down to a
register/memory assembly while carrying cost labels.  A checker on the
object code verifies that the labelling is sound (every run's priced
label trace bounds the measured cost) and, when possible, precise (the
bound is exact), computes the label-cost mapping, and an instrumentation
pass lifts it back onto the source as a self-monitoring ``cost``
variable.
"""

from .core import COST_VAR, FuelExhausted, Label, Store, Trace
from .costcheck import (
    CheckReport,
    Cfg,
    CostMap,
    analyze,
    build_cfg,
    check_precise,
    check_sound,
    compute_costmap,
    format_report,
    trace_cost,
)
from .imp import (
    Program,
    erase_imp,
    eval_bool,
    eval_expr,
    parse_imp,
    print_imp,
    run_imp,
    step_imp,
)
from .labelling import (
    LabelSupply,
    annotate,
    instrument,
    label_precise,
    label_simple,
)
from .mips import (
    MachineConfig,
    Memory,
    erase_mips,
    init_memory,
    parse_mips,
    print_mips,
    represents,
    run_mips,
    step_mips,
)
from .passes import (
    compile_bool,
    compile_expr,
    compile_program,
    compile_stmt,
    compile_vm,
    compile_vm_instr,
)
from .selftest import generate_program, run_selftest
from .vm import (
    HeightMismatch,
    NotWellFormed,
    VmState,
    erase_vm,
    infer_heights,
    parse_vm,
    print_vm,
    run_vm,
    step_vm,
)

__version__ = "0.1.0"

__all__ = [
    "COST_VAR",
    "CheckReport",
    "Cfg",
    "CostMap",
    "FuelExhausted",
    "HeightMismatch",
    "Label",
    "LabelSupply",
    "MachineConfig",
    "Memory",
    "NotWellFormed",
    "Program",
    "Store",
    "Trace",
    "VmState",
    "analyze",
    "annotate",
    "build_cfg",
    "check_precise",
    "check_sound",
    "compile_bool",
    "compile_expr",
    "compile_program",
    "compile_stmt",
    "compile_vm",
    "compile_vm_instr",
    "compute_costmap",
    "erase_imp",
    "erase_mips",
    "erase_vm",
    "eval_bool",
    "eval_expr",
    "format_report",
    "generate_program",
    "infer_heights",
    "init_memory",
    "instrument",
    "label_precise",
    "label_simple",
    "parse_imp",
    "parse_mips",
    "parse_vm",
    "print_imp",
    "print_mips",
    "print_vm",
    "represents",
    "run_imp",
    "run_mips",
    "run_selftest",
    "run_vm",
    "step_imp",
    "step_mips",
    "step_vm",
    "trace_cost",
]
