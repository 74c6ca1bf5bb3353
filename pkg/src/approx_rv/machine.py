from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple

from .circuits import DEFAULT_APPROX_FA, MASK32, FullAdderTable
from .energy import EnergyEvent, EnergyLedger
from .isa import (
    DEFAULT_SLOTS,
    UNIT_CSR,
    CsrFile,
    DecodedInstr,
    IllegalInstruction,
    MemoryFault,
    MisalignedAccess,
    SimulatorFault,
    address_gen,
    csr_access,
    decode,
    execute_arith,
    op_class,
    select_circuit,
    unit_for,
)
from .models import EXE_UNITS, ApproxControlWord, CircuitSlotTable, MachineConfig, SlotKind
from .storage import parse_ihex

logger = logging.getLogger(__name__)

MMIO_OUTPUT = 0xF0000000
MMIO_HALT = 0xF0000004

LOAD_WIDTHS = {"lb": (1, True), "lh": (2, True), "lw": (4, True), "lbu": (1, False), "lhu": (2, False)}
STORE_WIDTHS = {"sb": 1, "sh": 2, "sw": 4}
BRANCH_TESTS = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: _signed(a) < _signed(b),
    "bge": lambda a, b: _signed(a) >= _signed(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}


def _signed(value: int) -> int:
    return value - (1 << 32) if value & 0x80000000 else value


class HaltKind(str, Enum):
    RUNNING = "running"
    HALTED = "halted"
    FAULTED = "faulted"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class HaltStatus:
    kind: HaltKind = HaltKind.RUNNING
    exit_code: int | None = None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.kind is HaltKind.HALTED

    def to_dict(self) -> Dict[str, object]:
        return {"kind": self.kind.value, "exit_code": self.exit_code, "reason": self.reason}


@dataclass(frozen=True)
class TraceEvent:
    cycle: int
    pc: int
    raw: int
    mnemonic: str
    unit: str
    slot: int
    reg_writes: Tuple[Tuple[int, int], ...] = ()
    mem_accesses: Tuple[Tuple[str, int, int], ...] = ()

    def to_line(self) -> str:
        return f"{self.cycle} {self.pc:08x} {self.raw:08x} {self.mnemonic} [{self.unit}:{self.slot}]"


@dataclass
class MachineState:
    config: MachineConfig
    memory: bytearray
    pc: int
    regs: List[int]
    csrs: CsrFile = field(default_factory=CsrFile)
    halt: HaltStatus = field(default_factory=HaltStatus)
    output: List[int] = field(default_factory=list)
    slots: CircuitSlotTable = field(default_factory=lambda: DEFAULT_SLOTS)
    table: FullAdderTable = DEFAULT_APPROX_FA
    ledger: EnergyLedger | None = None
    trace: List[TraceEvent] | None = None
    class_counts: Counter = field(default_factory=Counter)
    extra_cycles: Counter = field(default_factory=Counter)
    pc_hash: "hashlib._Hash" = field(default_factory=lambda: hashlib.blake2b(digest_size=16))
    addr_hash: "hashlib._Hash" = field(default_factory=lambda: hashlib.blake2b(digest_size=16))

    @property
    def cycle(self) -> int:
        return self.csrs.cycle

    @property
    def instret(self) -> int:
        return self.csrs.instret

    @property
    def running(self) -> bool:
        return self.halt.kind is HaltKind.RUNNING

    def apply_csr_presets(self, presets: Mapping[int, int]) -> None:
        for addr, value in presets.items():
            self.csrs.write(addr, value)
        logger.debug("csr_presets_applied %s", " ".join(f"{k}={v}" for k, v in self.csrs.as_dict().items()))


@dataclass(frozen=True)
class RunSummary:
    instret: int
    cycle: int
    elapsed_s: float
    halt: HaltStatus
    output: Tuple[int, ...]
    class_counts: Dict[str, int]
    extra_cycles: Dict[str, int]
    pc_trace_hash: str
    addr_trace_hash: str

    def to_dict(self) -> Dict[str, object]:
        return {
            "instret": self.instret,
            "cycle": self.cycle,
            "elapsed_s": self.elapsed_s,
            "halt": self.halt.to_dict(),
            "output": list(self.output),
            "class_counts": dict(self.class_counts),
            "extra_cycles": dict(self.extra_cycles),
            "pc_trace_hash": self.pc_trace_hash,
            "addr_trace_hash": self.addr_trace_hash,
        }


def load_program(
    image: bytes | bytearray | str,
    base: int | None = None,
    config: MachineConfig | None = None,
    *,
    slots: CircuitSlotTable | None = None,
    table: FullAdderTable = DEFAULT_APPROX_FA,
    ledger: EnergyLedger | None = None,
    trace: bool = False,
) -> MachineState:
    """Install a raw little-endian image (or Intel HEX text) and reset the core.

    Counters and approximation CSRs start at zero, so every unit begins on
    its accurate default circuit.
    """

    config = config or MachineConfig()
    if base is not None and base != config.base:
        config = replace(config, base=base)
    data = parse_ihex(image) if isinstance(image, str) else bytes(image)
    if not data:
        raise ValueError("program image is empty")
    if len(data) > config.mem_size:
        raise ValueError(
            f"program image of {len(data)} bytes overflows memory of {config.mem_size} bytes"
        )
    memory = bytearray(config.mem_size)
    memory[: len(data)] = data
    logger.info("program_loaded bytes=%s base=0x%08x", len(data), config.base)
    return MachineState(
        config=config,
        memory=memory,
        pc=config.base,
        regs=[0] * config.num_regs,
        slots=slots or DEFAULT_SLOTS,
        table=table,
        ledger=ledger,
        trace=[] if trace else None,
    )


def _offset(state: MachineState, addr: int, width: int) -> int:
    offset = addr - state.config.base
    if offset < 0 or offset + width > state.config.mem_size:
        raise MemoryFault(f"access of {width} bytes at 0x{addr:08x} is outside memory")
    return offset


def _load(state: MachineState, addr: int, width: int, signed: bool) -> int:
    if addr % width:
        raise MisalignedAccess(f"misaligned {width}-byte load at 0x{addr:08x}")
    offset = _offset(state, addr, width)
    value = int.from_bytes(state.memory[offset : offset + width], "little", signed=signed)
    return value & MASK32


def _store(state: MachineState, addr: int, width: int, value: int) -> None:
    if addr % width:
        raise MisalignedAccess(f"misaligned {width}-byte store at 0x{addr:08x}")
    if addr == MMIO_OUTPUT:
        state.output.append(value & ((1 << (8 * width)) - 1))
        return
    if addr == MMIO_HALT:
        state.halt = HaltStatus(HaltKind.HALTED, exit_code=value & MASK32)
        return
    offset = _offset(state, addr, width)
    state.memory[offset : offset + width] = (value & ((1 << (8 * width)) - 1)).to_bytes(width, "little")


def _selection(
    state: MachineState, active: Tuple[str, int] | None = None
) -> Tuple[Tuple[str, int, SlotKind], ...]:
    """Slot and kind per execution unit; `active` pins the unit that executed."""

    selected = []
    for unit in EXE_UNITS:
        word = state.csrs.read(UNIT_CSR[unit])
        enabled = bool(word & 1)
        index = (word >> 1) & 0x3 if enabled else 0
        if active is not None and active[0] == unit:
            index = active[1]
        slot = state.slots.slot(unit, index)
        # A disabled unit runs its slot-0 circuit accurately.
        kind = slot.kind if slot is not None and enabled else SlotKind.ACCURATE
        selected.append((unit, index, kind))
    return tuple(selected)


def step(state: MachineState) -> TraceEvent | None:
    """Retire one instruction; a fault sets the halt status and returns None."""

    if not state.running:
        raise ValueError(f"machine is not running (halt={state.halt.kind.value})")
    pc = state.pc
    try:
        if pc % 4:
            raise MisalignedAccess(f"misaligned fetch at 0x{pc:08x}")
        raw = _load(state, pc, 4, False)
        instr = decode(raw, pc, state.config.num_regs)
        return _execute(state, instr, pc)
    except SimulatorFault as exc:
        state.halt = HaltStatus(HaltKind.FAULTED, reason=str(exc))
        logger.warning("machine_fault pc=0x%08x reason=%s", pc, exc)
        return None


def _execute(state: MachineState, instr: DecodedInstr, pc: int) -> TraceEvent:
    regs = state.regs
    latencies = state.config.latencies
    m = instr.mnemonic
    cls = op_class(m)
    unit = unit_for(m)
    slot = 0
    next_pc = (pc + 4) & MASK32
    extra = 0
    rd_value: int | None = None
    accesses: List[Tuple[str, int, int]] = []
    control_transfer = False

    if unit in EXE_UNITS:
        route = select_circuit(unit, m, state.csrs, state.slots)
        slot = route.slot
        rd_value = execute_arith(instr, regs, state.csrs, state.slots, route=route, table=state.table)
        if unit == "MUL":
            extra = latencies.mul_cycles - 1
        elif unit == "DIV":
            extra = latencies.div_cycles - 1
    elif m in LOAD_WIDTHS:
        width, signed = LOAD_WIDTHS[m]
        addr = address_gen(regs[instr.rs1], instr.imm)
        rd_value = _load(state, addr, width, signed)
        accesses.append(("load", addr, rd_value))
    elif m in STORE_WIDTHS:
        addr = address_gen(regs[instr.rs1], instr.imm)
        _store(state, addr, STORE_WIDTHS[m], regs[instr.rs2])
        accesses.append(("store", addr, regs[instr.rs2]))
    elif m in BRANCH_TESTS:
        control_transfer = True
        if BRANCH_TESTS[m](regs[instr.rs1], regs[instr.rs2]):
            next_pc = address_gen(pc, instr.imm)
            extra = latencies.branch_penalty
    elif m == "jal":
        control_transfer = True
        rd_value = next_pc
        next_pc = address_gen(pc, instr.imm)
        extra = latencies.branch_penalty
    elif m == "jalr":
        control_transfer = True
        rd_value = next_pc
        next_pc = address_gen(regs[instr.rs1], instr.imm) & ~1
        extra = latencies.branch_penalty
    elif m == "lui":
        rd_value = instr.imm & MASK32
    elif m == "auipc":
        rd_value = address_gen(pc, instr.imm)
    elif m.startswith("csr"):
        immediate = m.endswith("i")
        operand = instr.imm if immediate else regs[instr.rs1]
        source_nonzero = instr.imm != 0 if immediate else instr.rs1 != 0
        writes = m in ("csrrw", "csrrwi") or source_nonzero
        rd_value = csr_access(state.csrs, m, instr.csr, operand, writes=writes, raw=instr.raw, pc=pc)
    elif m in ("ecall", "ebreak"):
        state.halt = HaltStatus(HaltKind.HALTED, exit_code=regs[10] if len(regs) > 10 else 0)
    elif m.startswith("fence"):
        pass
    else:
        raise IllegalInstruction(instr.raw, pc, reason=f"unsupported instruction {m}")

    if control_transfer and next_pc % 4:
        raise MisalignedAccess(f"misaligned jump target 0x{next_pc:08x} from pc=0x{pc:08x}")

    writes: Tuple[Tuple[int, int], ...] = ()
    if rd_value is not None and instr.rd != 0:
        regs[instr.rd] = rd_value & MASK32
        writes = ((instr.rd, rd_value & MASK32),)

    cycles = 1 + extra
    state.csrs.cycle += cycles
    state.csrs.instret += 1
    state.class_counts[cls] += 1
    state.extra_cycles[cls] += extra
    if control_transfer:
        state.pc_hash.update(pc.to_bytes(4, "little") + next_pc.to_bytes(4, "little"))
    for _, addr, _ in accesses:
        state.addr_hash.update(addr.to_bytes(4, "little"))
    state.pc = next_pc

    if state.ledger is not None:
        mul_config = None
        if unit == "MUL":
            mul_config = ApproxControlWord.from_word(state.csrs.mulcsr).mul_config()
        state.ledger.accrue(
            EnergyEvent(
                unit=unit,
                slot=slot,
                op_class=cls,
                cycles=cycles,
                selection=_selection(state, (unit, slot)),
                mul_config=mul_config,
            )
        )

    event = TraceEvent(
        cycle=state.csrs.cycle,
        pc=pc,
        raw=instr.raw,
        mnemonic=m,
        unit=unit,
        slot=slot,
        reg_writes=writes,
        mem_accesses=tuple(accesses),
    )
    if state.trace is not None:
        state.trace.append(event)
    return event


def run(state: MachineState, max_cycles: int | None = None) -> RunSummary:
    limit = max_cycles if max_cycles is not None else state.config.max_cycles
    while state.running:
        if state.cycle >= limit:
            state.halt = HaltStatus(HaltKind.TIMEOUT, reason=f"max_cycles {limit} exceeded")
            break
        step(state)
    summary = summarize(state)
    logger.info(
        "run_finished instret=%s cycle=%s halt=%s exit=%s",
        summary.instret,
        summary.cycle,
        summary.halt.kind.value,
        summary.halt.exit_code,
    )
    return summary


def summarize(state: MachineState) -> RunSummary:
    return RunSummary(
        instret=state.instret,
        cycle=state.cycle,
        elapsed_s=state.cycle / state.config.clock_hz,
        halt=state.halt,
        output=tuple(state.output),
        class_counts=dict(state.class_counts),
        extra_cycles=dict(state.extra_cycles),
        pc_trace_hash=state.pc_hash.hexdigest(),
        addr_trace_hash=state.addr_hash.hexdigest(),
    )


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for event in events:
            handle.write(event.to_line() + "\n")
            count += 1
    return count
