from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, Tuple

WORD_MASK = 0xFFFFFFFF

# Error lines honoured by the ALU carry-select adder; upper positions stay accurate.
ADDER_ERROR_LINES = 16
ADDER_FORCED_ACCURATE = 0xFFFF0000

# Controllable positions of the 12-bit final addition inside the 8x8 multiplier.
MUL_ERROR_LINES = 7
MUL_MASK_ACCURATE = (1 << MUL_ERROR_LINES) - 1
MUL_MAX_TRUNCATION = 31

SLOTS_PER_UNIT = 4
EXE_UNITS = ("ALU", "MUL", "DIV")


class SlotKind(str, Enum):
    ACCURATE = "accurate"
    APPROXIMATE = "approximate"


@dataclass(frozen=True)
class AdderConfig:
    """Error-control lines of the ALU adder (bit i = line of the full adder at bit i)."""

    error_mask: int = WORD_MASK
    carry_in: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.error_mask <= WORD_MASK:
            raise ValueError(f"error_mask must fit in 32 bits, got {self.error_mask!r}")
        if self.carry_in not in (0, 1):
            raise ValueError(f"carry_in must be 0 or 1, got {self.carry_in!r}")

    @property
    def effective_mask(self) -> int:
        return self.error_mask | ADDER_FORCED_ACCURATE

    @property
    def is_exact(self) -> bool:
        return self.effective_mask == WORD_MASK

    @classmethod
    def accurate(cls) -> "AdderConfig":
        return cls()


@dataclass(frozen=True)
class MulConfig:
    """Error lines of the multiplier's final adder plus product truncation."""

    error_mask: int = MUL_MASK_ACCURATE
    truncation: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.error_mask <= MUL_MASK_ACCURATE:
            raise ValueError(f"error_mask must be a 7-bit mask, got {self.error_mask!r}")
        if not 0 <= self.truncation <= MUL_MAX_TRUNCATION:
            raise ValueError(
                f"truncation must be between 0 and {MUL_MAX_TRUNCATION}, got {self.truncation!r}"
            )

    @property
    def is_exact(self) -> bool:
        return self.error_mask == MUL_MASK_ACCURATE and self.truncation == 0

    @classmethod
    def accurate(cls) -> "MulConfig":
        return cls()


@dataclass(frozen=True)
class ApproxControlWord:
    """Decoded view of an approximation CSR (alucsr, mulcsr, divcsr).

    Layout: bit 0 enable, bits 2:1 circuit select, bits 7:3 truncation,
    bits 11:8 and 15:12 custom fields, bits 31:16 error control.
    """

    enable: int = 0
    circuit_select: int = 0
    truncation: int = 0
    custom_a: int = 0
    custom_b: int = 0
    error_field: int = 0

    def __post_init__(self) -> None:
        _check_field("enable", self.enable, 1)
        _check_field("circuit_select", self.circuit_select, 2)
        _check_field("truncation", self.truncation, 5)
        _check_field("custom_a", self.custom_a, 4)
        _check_field("custom_b", self.custom_b, 4)
        _check_field("error_field", self.error_field, 16)

    @classmethod
    def from_word(cls, word: int) -> "ApproxControlWord":
        word &= WORD_MASK
        return cls(
            enable=word & 0x1,
            circuit_select=(word >> 1) & 0x3,
            truncation=(word >> 3) & 0x1F,
            custom_a=(word >> 8) & 0xF,
            custom_b=(word >> 12) & 0xF,
            error_field=(word >> 16) & 0xFFFF,
        )

    def to_word(self) -> int:
        return (
            self.enable
            | (self.circuit_select << 1)
            | (self.truncation << 3)
            | (self.custom_a << 8)
            | (self.custom_b << 12)
            | (self.error_field << 16)
        )

    @classmethod
    def for_multiplier(
        cls,
        slot: int = 1,
        error_mask: int = MUL_MASK_ACCURATE,
        truncation: int = 0,
    ) -> "ApproxControlWord":
        return cls(enable=1, circuit_select=slot, truncation=truncation, error_field=error_mask)

    @property
    def active_slot(self) -> int:
        return self.circuit_select if self.enable else 0

    def mul_config(self) -> MulConfig:
        return MulConfig(error_mask=self.error_field & MUL_MASK_ACCURATE, truncation=self.truncation)

    def adder_config(self) -> AdderConfig:
        return AdderConfig(error_mask=self.error_field)

    def describe(self) -> Dict[str, object]:
        return {
            "raw": f"0x{self.to_word():08x}",
            "enable": self.enable,
            "slot": self.circuit_select,
            "truncation": self.truncation,
            "custom_a": self.custom_a,
            "custom_b": self.custom_b,
            "error_field": f"0x{self.error_field:04x}",
        }


def _check_field(name: str, value: int, width: int) -> None:
    if not isinstance(value, int) or not 0 <= value < (1 << width):
        raise ValueError(f"{name} must fit in {width} bits, got {value!r}")


@dataclass(frozen=True)
class CircuitSlot:
    kind: SlotKind
    label: str = ""


@dataclass
class CircuitSlotTable:
    """Up to four circuits per execution unit; `None` marks an empty slot."""

    units: Dict[str, Tuple[CircuitSlot | None, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for unit, slots in self.units.items():
            if len(slots) != SLOTS_PER_UNIT:
                raise ValueError(
                    f"unit {unit!r} must declare {SLOTS_PER_UNIT} slots, got {len(slots)}"
                )

    @classmethod
    def default_build(cls) -> "CircuitSlotTable":
        return cls(
            units={
                "ALU": (CircuitSlot(SlotKind.APPROXIMATE, "error-controllable CSA"), None, None, None),
                "MUL": (
                    CircuitSlot(SlotKind.ACCURATE, "accurate 32x32"),
                    CircuitSlot(SlotKind.APPROXIMATE, "hierarchical approximate 32x32"),
                    None,
                    None,
                ),
                "DIV": (CircuitSlot(SlotKind.ACCURATE, "accurate divider"), None, None, None),
            }
        )

    def slot(self, unit: str, index: int) -> CircuitSlot | None:
        if unit not in self.units:
            raise KeyError(f"Unknown execution unit: {unit}")
        return self.units[unit][index]

    def occupied(self, unit: str) -> Dict[int, CircuitSlot]:
        return {
            index: slot
            for index, slot in enumerate(self.units.get(unit, ()))
            if slot is not None
        }


@dataclass(frozen=True)
class Latencies:
    mul_cycles: int = 4
    div_cycles: int = 32
    branch_penalty: int = 1

    def __post_init__(self) -> None:
        for name in ("mul_cycles", "div_cycles", "branch_penalty"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be an int >= 1, got {value!r}")


@dataclass(frozen=True)
class MachineConfig:
    mem_size: int = 4 * 1024 * 1024
    base: int = 0
    clock_hz: float = 5e8
    latencies: Latencies = field(default_factory=Latencies)
    max_cycles: int = 50_000_000
    num_regs: int = 16  # RV32E; 32 is the full RV32I register file

    def __post_init__(self) -> None:
        if self.clock_hz <= 0:
            raise ValueError(f"clock_hz must be positive, got {self.clock_hz!r}")
        if self.mem_size <= 0 or self.mem_size % 4:
            raise ValueError(f"mem_size must be a positive multiple of 4, got {self.mem_size!r}")
        if self.base % 4 or not 0 <= self.base <= WORD_MASK:
            raise ValueError(f"base must be a word-aligned address, got {self.base!r}")
        if self.max_cycles < 1:
            raise ValueError(f"max_cycles must be >= 1, got {self.max_cycles!r}")
        if self.num_regs not in (16, 32):
            raise ValueError(f"num_regs must be 16 or 32, got {self.num_regs!r}")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> "MachineConfig":
        merged = dict(payload)
        latencies = merged.get("latencies")
        if isinstance(latencies, dict):
            merged["latencies"] = Latencies(**latencies)
        return cls(**merged)


@dataclass(frozen=True)
class KernelSpec:
    name: str
    params: Dict[str, int] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        for key, value in self.params.items():
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"params[{key!r}] must be a positive int, got {value!r}")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class RunRequest:
    kernel: KernelSpec | None = None
    bin_path: str | None = None
    ihex_path: str | None = None
    alucsr: int = 0
    mulcsr: int = 0
    divcsr: int = 0
    cost_model: str | None = None
    report_format: str = "json"
    trace_path: str | None = None
    max_cycles: int | None = None
    prologue_csr: bool = False

    def __post_init__(self) -> None:
        sources = [src for src in (self.kernel, self.bin_path, self.ihex_path) if src is not None]
        if len(sources) != 1:
            raise ValueError("Exactly one program source is required (--kernel, --bin or --ihex)")
        for name in ("alucsr", "mulcsr", "divcsr"):
            value = getattr(self, name)
            if not 0 <= value <= WORD_MASK:
                raise ValueError(f"{name} must be a 32-bit word, got {value!r}")
        if self.report_format not in ("json", "csv"):
            raise ValueError(f"report format must be json or csv, got {self.report_format!r}")

    @property
    def csr_presets(self) -> Dict[int, int]:
        return {0x800: self.alucsr, 0x801: self.mulcsr, 0x802: self.divcsr}
