from .circuits import (
    APPROX_FA_PASS_A,
    APPROX_FA_PASS_CIN,
    DEFAULT_APPROX_FA,
    EXACT_FA,
    FullAdderMode,
    alu_add,
    alu_sub,
    approx_mul8,
    approx_mul8_array,
    csa32_add,
    eca4_add,
    full_adder,
    max_error_bound,
    mul16,
    mul32,
    ripple32_add,
)
from .energy import (
    CostModel,
    EnergyEvent,
    EnergyLedger,
    EnergyReport,
    finalize,
    improvement,
    improvement_table,
    load_cost_model,
    summary_across_apps,
)
from .error_analysis import (
    ErrorStats,
    app_output_error,
    error_stats_8x8,
    matmul_error_bound,
    power_estimate,
    sweep_configs,
    sweep_summary,
)
from .harness import RunOutcome, compare_kernels, run_request
from .isa import (
    ConfigurationFault,
    CsrFile,
    DecodedInstr,
    IllegalInstruction,
    MemoryFault,
    MisalignedAccess,
    SimulatorFault,
    address_gen,
    csr_access,
    decode,
    disassemble,
    execute_arith,
    select_circuit,
)
from .kernels import (
    KERNELS,
    EncodedProgram,
    InstructionMix,
    ProgramBuilder,
    default_spec,
    encode,
    generate,
    instruction_mix,
)
from .machine import (
    HaltKind,
    HaltStatus,
    MachineState,
    RunSummary,
    TraceEvent,
    load_program,
    run,
    step,
    write_trace,
)
from .models import (
    AdderConfig,
    ApproxControlWord,
    CircuitSlot,
    CircuitSlotTable,
    KernelSpec,
    Latencies,
    MachineConfig,
    MulConfig,
    RunRequest,
    SlotKind,
)
from .storage import format_ihex, load_image, parse_ihex

__all__ = [
    "EXACT_FA",
    "APPROX_FA_PASS_A",
    "APPROX_FA_PASS_CIN",
    "DEFAULT_APPROX_FA",
    "FullAdderMode",
    "full_adder",
    "eca4_add",
    "csa32_add",
    "ripple32_add",
    "alu_add",
    "alu_sub",
    "approx_mul8",
    "approx_mul8_array",
    "max_error_bound",
    "mul16",
    "mul32",
    "ErrorStats",
    "error_stats_8x8",
    "sweep_configs",
    "sweep_summary",
    "power_estimate",
    "app_output_error",
    "matmul_error_bound",
    "SimulatorFault",
    "IllegalInstruction",
    "MisalignedAccess",
    "MemoryFault",
    "ConfigurationFault",
    "DecodedInstr",
    "CsrFile",
    "decode",
    "disassemble",
    "execute_arith",
    "select_circuit",
    "address_gen",
    "csr_access",
    "HaltKind",
    "HaltStatus",
    "MachineState",
    "RunSummary",
    "TraceEvent",
    "load_program",
    "step",
    "run",
    "write_trace",
    "CostModel",
    "EnergyEvent",
    "EnergyLedger",
    "EnergyReport",
    "load_cost_model",
    "finalize",
    "improvement",
    "improvement_table",
    "summary_across_apps",
    "KERNELS",
    "EncodedProgram",
    "InstructionMix",
    "ProgramBuilder",
    "encode",
    "generate",
    "default_spec",
    "instruction_mix",
    "RunOutcome",
    "run_request",
    "compare_kernels",
    "AdderConfig",
    "MulConfig",
    "ApproxControlWord",
    "SlotKind",
    "CircuitSlot",
    "CircuitSlotTable",
    "Latencies",
    "MachineConfig",
    "KernelSpec",
    "RunRequest",
    "parse_ihex",
    "format_ihex",
    "load_image",
]
