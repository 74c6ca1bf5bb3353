"""Single runs and accurate/approximate comparisons built on the machine."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .energy import (
    CostModel,
    EnergyLedger,
    EnergyReport,
    improvement_table,
    load_cost_model,
    summary_across_apps,
)
from .error_analysis import app_output_error
from .kernels import KERNELS, InstructionMix, csr_prologue, default_spec, generate, instruction_mix
from .machine import RunSummary, TraceEvent, load_program, run, write_trace
from .models import EXE_UNITS, ApproxControlWord, CircuitSlotTable, KernelSpec, MachineConfig, RunRequest
from .storage import load_image

logger = logging.getLogger(__name__)

ACCURATE_MODEL = "tables_accurate.json"
APPROX_MODEL = "tables_approx.json"
DEFAULT_APPROX_MULCSR = ApproxControlWord.for_multiplier(slot=1, error_mask=0x7E).to_word()
COMPARE_COLUMNS = [
    "app",
    "instret",
    "pj_per_instr_accurate",
    "pj_per_instr_approx",
    "total_improvement",
    "exe_improvement",
    "mul_improvement",
    "control_flow_identical",
    "output_er",
    "output_mred",
]


@dataclass
class RunOutcome:
    name: str
    summary: RunSummary
    report: EnergyReport | None
    mix: InstructionMix
    csrs: Dict[str, str]
    reference: Tuple[int, ...] | None = None
    output_error: Dict[str, float] | None = None
    trace: List[TraceEvent] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.summary.halt.ok

    def to_dict(self) -> Dict[str, object]:
        return {
            "program": self.name,
            "csrs": self.csrs,
            "csr_fields": {
                name: ApproxControlWord.from_word(int(value, 16)).describe()
                for name, value in self.csrs.items()
            },
            "run": self.summary.to_dict(),
            "energy": self.report.to_dict() if self.report else None,
            "instruction_mix": self.mix.to_dict(),
            "matches_reference": (
                list(self.summary.output) == list(self.reference)
                if self.reference is not None
                else None
            ),
            "output_error": self.output_error,
        }


def resolve_cost_model(request: RunRequest, model: CostModel | str | None) -> CostModel:
    if isinstance(model, CostModel):
        return model
    source = model or request.cost_model
    if source is None:
        enabled = ApproxControlWord.from_word(request.mulcsr).enable
        source = APPROX_MODEL if enabled else ACCURATE_MODEL
    return load_cost_model(source)


def _check_slot_coverage(model: CostModel, slots: CircuitSlotTable) -> None:
    if model.mode != "event":
        return
    for unit in EXE_UNITS:
        missing = sorted(set(slots.occupied(unit)) - set(model.event_units.get(unit, {})))
        if missing:
            raise ValueError(f"cost model {model.name!r} has no {unit} entry for occupied slot(s) {missing}")


def run_request(
    request: RunRequest,
    model: CostModel | str | None = None,
    config: MachineConfig | None = None,
) -> RunOutcome:
    """Load, preset CSRs, run to completion and account energy for one request."""

    reference: Tuple[int, ...] | None = None
    if request.kernel is not None:
        program = generate(request.kernel)
        if request.prologue_csr:
            program = program.with_prologue(csr_prologue(request.csr_presets))
        image, name, reference = program.image(), program.name, program.reference
    else:
        path = request.bin_path or request.ihex_path
        image, name = load_image(path), str(path)

    cost_model = resolve_cost_model(request, model).for_profile(name)
    ledger = EnergyLedger(cost_model)
    state = load_program(image, config=config, ledger=ledger, trace=request.trace_path is not None)
    _check_slot_coverage(cost_model, state.slots)
    if not request.prologue_csr:
        state.apply_csr_presets(request.csr_presets)
    summary = run(state, request.max_cycles)

    report = ledger.finalize(summary) if summary.instret > 0 else None
    output_error = None
    if reference is not None and summary.halt.ok and len(reference) == len(summary.output):
        output_error = app_output_error(reference, summary.output)
    if request.trace_path is not None:
        write_trace(state.trace or [], request.trace_path)
    logger.info(
        "run_request_finished program=%s model=%s halt=%s instret=%s",
        name,
        cost_model.name,
        summary.halt.kind.value,
        summary.instret,
    )
    return RunOutcome(
        name=name,
        summary=summary,
        report=report,
        mix=instruction_mix(summary.class_counts),
        csrs={key: f"0x{value:08x}" for key, value in zip(("alucsr", "mulcsr", "divcsr"), request.csr_presets.values())},
        reference=reference,
        output_error=output_error,
        trace=list(state.trace or []),
    )


def compare_kernels(
    kernels: Sequence[str | KernelSpec],
    accurate_model: CostModel | str = ACCURATE_MODEL,
    approx_model: CostModel | str = APPROX_MODEL,
    *,
    mulcsr: int = DEFAULT_APPROX_MULCSR,
    alucsr: int = 0,
    divcsr: int = 0,
    seed: int = 0,
    workers: int | None = None,
) -> Dict[str, object]:
    """Run every kernel accurately and approximately and tabulate the savings."""

    if not kernels:
        raise ValueError("compare needs at least one kernel")
    specs = [k if isinstance(k, KernelSpec) else default_spec(k, seed) for k in kernels]
    accurate = accurate_model if isinstance(accurate_model, CostModel) else load_cost_model(accurate_model)
    approx = approx_model if isinstance(approx_model, CostModel) else load_cost_model(approx_model)

    def _pair(spec: KernelSpec) -> Tuple[RunOutcome, RunOutcome]:
        base = run_request(RunRequest(kernel=spec), accurate)
        approximate = run_request(
            RunRequest(kernel=spec, alucsr=alucsr, mulcsr=mulcsr, divcsr=divcsr), approx
        )
        for label, outcome in (("accurate", base), ("approximate", approximate)):
            if not outcome.ok:
                halt = outcome.summary.halt
                raise ValueError(f"{spec.name} {label} run ended {halt.kind.value}: {halt.reason}")
        return base, approximate

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_pair, specs))
    else:
        outcomes = [_pair(spec) for spec in specs]

    rows = improvement_table(
        [(spec.name, base.report, approximate.report) for spec, (base, approximate) in zip(specs, outcomes)]
    )
    for row, (base, approximate) in zip(rows, outcomes):
        row["instret"] = base.summary.instret
        row["control_flow_identical"] = (
            base.summary.instret == approximate.summary.instret
            and base.summary.pc_trace_hash == approximate.summary.pc_trace_hash
            and base.summary.addr_trace_hash == approximate.summary.addr_trace_hash
        )
        row["output_error"] = app_output_error(base.summary.output, approximate.summary.output)
    averages = summary_across_apps([(base.report, approximate.report) for base, approximate in outcomes])
    logger.info(
        "compare_finished apps=%s avg_exe=%.3f avg_mul=%.3f",
        len(rows),
        averages["avg_exe_improvement"],
        averages["avg_mul_improvement"],
    )
    return {
        "accurate_model": accurate.name,
        "approx_model": approx.name,
        "approx_mulcsr": f"0x{mulcsr:08x}",
        "apps": rows,
        "averages": averages,
    }


def all_kernels() -> List[str]:
    return list(KERNELS)
