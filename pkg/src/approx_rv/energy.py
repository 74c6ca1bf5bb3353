from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Mapping, Protocol, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .error_analysis import power_estimate
from .models import EXE_UNITS, MulConfig, SlotKind

logger = logging.getLogger(__name__)

UNITS = ("MUL", "ALU", "DIV", "IFID", "MEMWB", "other")
FRONT_UNITS = ("IFID", "MEMWB", "other")
SCOPES = ("total", "exe", "mul")
SLOT_KINDS = tuple(kind.value for kind in SlotKind)

# mW * s -> pJ
PJ_PER_MW_SECOND = 1e9
# uW * s -> pJ
PJ_PER_UW_SECOND = 1e6

CSV_COLUMNS = [
    "profile",
    "mode",
    "instret",
    "cycle",
    "elapsed_s",
    "total_pj",
    "pj_per_instr",
    "total_power_mw",
    "exe_power_mw",
    "exe_share",
    *(f"{unit}_pj" for unit in UNITS),
]

NonNegative = Annotated[float, Field(ge=0)]


class TableCostDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["table"]
    name: str = ""
    clock_hz: float = Field(default=5e8, gt=0)
    units: Dict[str, NonNegative | Dict[str, NonNegative]]
    profiles: Dict[str, Dict[str, NonNegative | Dict[str, NonNegative]]] = Field(
        default_factory=dict
    )

    @field_validator("units")
    @classmethod
    def _check_units(cls, value):
        _check_table_units(value)
        return value

    @field_validator("profiles")
    @classmethod
    def _check_profiles(cls, value):
        for units in value.values():
            _check_table_units(units)
        return value


class EventSlotDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    leakage_mw: NonNegative = 0.0
    ops: Dict[str, NonNegative] = Field(default_factory=dict)
    power_range_uw: Tuple[NonNegative, NonNegative] | None = None


class EventUnitDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    slots: Dict[int, EventSlotDocument]

    @field_validator("slots")
    @classmethod
    def _check_slots(cls, value):
        if not value:
            raise ValueError("a unit needs at least one slot")
        for index in value:
            if not 0 <= index <= 3:
                raise ValueError(f"slot index must be 0-3, got {index}")
        return value


class EventCostDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["event"]
    name: str = ""
    clock_hz: float = Field(default=5e8, gt=0)
    gating: bool = True
    units: Dict[str, EventUnitDocument]

    @field_validator("units")
    @classmethod
    def _check_units(cls, value):
        _check_unit_names(value)
        return value


def _check_unit_names(units: Mapping[str, object]) -> None:
    unknown = sorted(set(units) - set(UNITS))
    if unknown:
        raise ValueError(f"unknown unit names: {', '.join(unknown)}")
    missing = [unit for unit in UNITS if unit not in units]
    if missing:
        raise ValueError(f"missing units: {', '.join(missing)}")


def _check_table_units(units: Mapping[str, object]) -> None:
    _check_unit_names(units)
    for unit, entry in units.items():
        if isinstance(entry, dict):
            bad = sorted(set(entry) - set(SLOT_KINDS))
            if bad or not entry:
                raise ValueError(f"unit {unit} must be keyed by slot kind, got {sorted(entry)}")


@dataclass(frozen=True)
class EventSlot:
    leakage_mw: float
    ops: Dict[str, float]
    power_range_uw: Tuple[float, float] | None = None

    def op_energy_pj(self, op_class: str, cycles: int, clock_hz: float, mul_config: MulConfig | None) -> float:
        if self.power_range_uw is not None and mul_config is not None:
            low, high = self.power_range_uw
            return power_estimate(mul_config, low, high) * cycles / clock_hz * PJ_PER_UW_SECOND
        return self.ops.get(op_class, self.ops.get("any", 0.0))


@dataclass(frozen=True)
class CostModel:
    """Validated cost model.

    Table mode holds average unit powers (mW) per active slot kind. Event mode
    holds per-slot leakage plus per-op dynamic energies in pJ.
    """

    mode: str
    clock_hz: float
    name: str = ""
    units: Dict[str, Dict[str, float]] = field(default_factory=dict)
    profiles: Dict[str, Dict[str, Dict[str, float]]] = field(default_factory=dict)
    gating: bool = True
    event_units: Dict[str, Dict[int, EventSlot]] = field(default_factory=dict)
    profile: str = ""

    def for_profile(self, name: str | None) -> "CostModel":
        if not name or name not in self.profiles:
            return self
        return replace(self, units=self.profiles[name], profile=name)

    def with_gating(self, gating: bool) -> "CostModel":
        return replace(self, gating=gating)

    def unit_power_mw(self, unit: str, kind: SlotKind = SlotKind.ACCURATE) -> float:
        if unit not in self.units:
            raise KeyError(f"Unknown unit: {unit}")
        return self.units[unit][kind.value]


def _normalise_table(units: Mapping[str, object]) -> Dict[str, Dict[str, float]]:
    normalised: Dict[str, Dict[str, float]] = {}
    for unit, entry in units.items():
        if isinstance(entry, dict):
            accurate = float(entry.get("accurate", entry.get("approximate", 0.0)))
            approximate = float(entry.get("approximate", accurate))
            normalised[unit] = {"accurate": accurate, "approximate": approximate}
        else:
            normalised[unit] = {kind: float(entry) for kind in SLOT_KINDS}
    return normalised


def load_cost_model(document: Mapping[str, object] | str | Path) -> CostModel:
    """Validate a cost-model document (mapping, JSON path or shipped model name)."""

    if not isinstance(document, Mapping):
        document = json.loads(_read_model_text(document))
    if not document:
        raise ValueError("cost model document is empty")
    mode = document.get("mode")
    if mode == "table":
        parsed = TableCostDocument.model_validate(document)
        model = CostModel(
            mode="table",
            clock_hz=parsed.clock_hz,
            name=parsed.name,
            units=_normalise_table(parsed.units),
            profiles={key: _normalise_table(units) for key, units in parsed.profiles.items()},
        )
    elif mode == "event":
        parsed = EventCostDocument.model_validate(document)
        model = CostModel(
            mode="event",
            clock_hz=parsed.clock_hz,
            name=parsed.name,
            gating=parsed.gating,
            event_units={
                unit: {
                    index: EventSlot(
                        leakage_mw=slot.leakage_mw,
                        ops=dict(slot.ops),
                        power_range_uw=slot.power_range_uw,
                    )
                    for index, slot in spec.slots.items()
                }
                for unit, spec in parsed.units.items()
            },
        )
    else:
        raise ValueError(f"cost model mode must be 'table' or 'event', got {mode!r}")
    logger.info("cost_model_loaded name=%s mode=%s profiles=%s", model.name, model.mode, len(model.profiles))
    return model


def _read_model_text(source: str | Path) -> str:
    path = Path(source)
    if path.exists():
        return path.read_text(encoding="utf-8")
    shipped = resources.files("approx_rv") / "data" / path.name
    if shipped.is_file():
        return shipped.read_text(encoding="utf-8")
    raise FileNotFoundError(f"Cost model not found: {source}")


def shipped_cost_models() -> List[str]:
    return sorted(
        entry.name
        for entry in (resources.files("approx_rv") / "data").iterdir()
        if entry.name.endswith(".json")
    )


@dataclass(frozen=True)
class EnergyEvent:
    """One retired instruction as seen by the energy ledger."""

    unit: str
    slot: int
    op_class: str
    cycles: int
    selection: Tuple[Tuple[str, int, SlotKind], ...] = ()
    mul_config: MulConfig | None = None


class RunTotals(Protocol):
    instret: int
    cycle: int
    elapsed_s: float


@dataclass(frozen=True)
class EnergyReport:
    profile: str
    mode: str
    instret: int
    cycle: int
    elapsed_s: float
    per_unit_pj: Dict[str, float]
    slot_pj: Dict[str, float]
    total_pj: float
    pj_per_instr: float
    unit_power_mw: Dict[str, float]
    exe_power_mw: float
    total_power_mw: float
    power_shares: Dict[str, float]
    exe_share: float

    def scope_power(self, scope: str) -> float:
        if scope == "total":
            return self.total_power_mw
        if scope == "exe":
            return self.exe_power_mw
        if scope == "mul":
            return self.unit_power_mw.get("MUL", 0.0)
        raise ValueError(f"scope must be one of {', '.join(SCOPES)}, got {scope!r}")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_csv_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "profile": self.profile,
            "mode": self.mode,
            "instret": self.instret,
            "cycle": self.cycle,
            "elapsed_s": f"{self.elapsed_s:.9e}",
            "total_pj": f"{self.total_pj:.6f}",
            "pj_per_instr": f"{self.pj_per_instr:.6f}",
            "total_power_mw": f"{self.total_power_mw:.6f}",
            "exe_power_mw": f"{self.exe_power_mw:.6f}",
            "exe_share": f"{self.exe_share:.6f}",
        }
        for unit in UNITS:
            row[f"{unit}_pj"] = f"{self.per_unit_pj.get(unit, 0.0):.6f}"
        return row


class EnergyLedger:
    """Accumulates energy per (unit, slot) for one machine instance."""

    def __init__(self, model: CostModel) -> None:
        self.model = model
        self.slot_energy: Dict[Tuple[str, int], float] = {}
        self.cycles = 0

    def _add(self, unit: str, slot: int, pj: float) -> None:
        key = (unit, slot)
        self.slot_energy[key] = self.slot_energy.get(key, 0.0) + pj

    def accrue(self, event: EnergyEvent) -> "EnergyLedger":
        if event.unit not in UNITS:
            raise KeyError(f"Unknown unit: {event.unit}")
        if event.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {event.cycles!r}")
        if self.model.mode == "table":
            self._accrue_table(event)
        else:
            self._accrue_event(event)
        self.cycles += event.cycles
        return self

    def _accrue_table(self, event: EnergyEvent) -> None:
        seconds = event.cycles / self.model.clock_hz
        selected = {unit: (slot, kind) for unit, slot, kind in event.selection}
        for unit in UNITS:
            slot, kind = selected.get(unit, (0, SlotKind.ACCURATE))
            if unit == event.unit:
                slot = event.slot
            power = self.model.unit_power_mw(unit, kind)
            self._add(unit, slot, power * seconds * PJ_PER_MW_SECOND)

    def _accrue_event(self, event: EnergyEvent) -> None:
        model = self.model
        seconds = event.cycles / model.clock_hz
        selected = {unit: slot for unit, slot, _ in event.selection}
        for unit in UNITS:
            slots = model.event_units.get(unit)
            if slots is None:
                raise KeyError(f"Unknown unit: {unit}")
            chosen = event.slot if unit == event.unit else selected.get(unit, 0)
            if chosen not in slots:
                raise KeyError(f"{unit} slot {chosen} has no entry in cost model {model.name!r}")
            if unit in FRONT_UNITS:
                active = [chosen]
            else:
                active = [chosen] if model.gating else sorted(slots)
            for index in active:
                spec = slots[index]
                pj = spec.leakage_mw * seconds * PJ_PER_MW_SECOND
                if unit in FRONT_UNITS or unit == event.unit:
                    pj += spec.op_energy_pj(event.op_class, event.cycles, model.clock_hz, event.mul_config)
                self._add(unit, index, pj)

    def merge(self, other: "EnergyLedger") -> "EnergyLedger":
        merged = EnergyLedger(self.model)
        for source in (self, other):
            for (unit, slot), pj in source.slot_energy.items():
                merged._add(unit, slot, pj)
        merged.cycles = self.cycles + other.cycles
        return merged

    def per_unit(self) -> Dict[str, float]:
        totals = {unit: 0.0 for unit in UNITS}
        for (unit, _), pj in self.slot_energy.items():
            totals[unit] += pj
        return totals

    def finalize(self, summary: RunTotals) -> EnergyReport:
        return finalize(self, summary)


def finalize(ledger: EnergyLedger, summary: RunTotals) -> EnergyReport:
    if summary.instret <= 0:
        raise ValueError("cannot finalize an energy report for a run with zero retired instructions")
    if summary.elapsed_s <= 0:
        raise ValueError("elapsed time must be positive")
    per_unit = ledger.per_unit()
    total = sum(per_unit.values())
    unit_power = {
        unit: pj / summary.elapsed_s / PJ_PER_MW_SECOND for unit, pj in per_unit.items()
    }
    total_power = sum(unit_power.values())
    exe_power = sum(unit_power[unit] for unit in EXE_UNITS)
    shares = {
        unit: (power / total_power if total_power else 0.0) for unit, power in unit_power.items()
    }
    report = EnergyReport(
        profile=ledger.model.profile or ledger.model.name,
        mode=ledger.model.mode,
        instret=summary.instret,
        cycle=summary.cycle,
        elapsed_s=summary.elapsed_s,
        per_unit_pj=per_unit,
        slot_pj={f"{unit}:{slot}": pj for (unit, slot), pj in sorted(ledger.slot_energy.items())},
        total_pj=total,
        pj_per_instr=total / summary.instret,
        unit_power_mw=unit_power,
        exe_power_mw=exe_power,
        total_power_mw=total_power,
        power_shares=shares,
        exe_share=exe_power / total_power if total_power else 0.0,
    )
    logger.info(
        "energy_finalized profile=%s total_pj=%.3f pj_per_instr=%.4f exe_share=%.4f",
        report.profile,
        report.total_pj,
        report.pj_per_instr,
        report.exe_share,
    )
    return report


def improvement(accurate: EnergyReport, approx: EnergyReport, scope: str = "total") -> float:
    """Percent power reduction of `approx` against `accurate` for one scope."""

    reference = accurate.scope_power(scope)
    if reference == 0:
        raise ValueError(f"accurate report has zero {scope} power")
    return 100.0 * (reference - approx.scope_power(scope)) / reference


def improvement_table(
    pairs: Sequence[Tuple[str, EnergyReport, EnergyReport]],
) -> List[Dict[str, object]]:
    return [
        {
            "app": name,
            "pj_per_instr_accurate": accurate.pj_per_instr,
            "pj_per_instr_approx": approx.pj_per_instr,
            **{f"{scope}_improvement": improvement(accurate, approx, scope) for scope in SCOPES},
        }
        for name, accurate, approx in pairs
    ]


def summary_across_apps(pairs: Sequence[Tuple[EnergyReport, EnergyReport]]) -> Dict[str, float]:
    if not pairs:
        raise ValueError("summary_across_apps needs at least one (accurate, approx) pair")
    averages = {}
    for scope in SCOPES:
        values = [improvement(accurate, approx, scope) for accurate, approx in pairs]
        averages[f"avg_{scope}_improvement"] = math.fsum(values) / len(values)
    return averages
