"""RV32IEM decode/execute semantics, the CSR file and approximation routing."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Sequence

from .circuits import (
    DEFAULT_APPROX_FA,
    MASK32,
    FullAdderTable,
    alu_add,
    alu_sub,
    exact_div,
    mul32_signed,
    to_signed32,
)
from .models import AdderConfig, ApproxControlWord, CircuitSlotTable, SlotKind

CSR_ALU = 0x800
CSR_MUL = 0x801
CSR_DIV = 0x802
CSR_CYCLE = 0xC00
CSR_CYCLEH = 0xC80
CSR_INSTRET = 0xC02
CSR_INSTRETH = 0xC82

APPROX_CSRS = {CSR_ALU: "alucsr", CSR_MUL: "mulcsr", CSR_DIV: "divcsr"}
COUNTER_CSRS = {
    CSR_CYCLE: "cycle",
    CSR_CYCLEH: "cycleh",
    CSR_INSTRET: "instret",
    CSR_INSTRETH: "instreth",
}
UNIT_CSR = {"ALU": CSR_ALU, "MUL": CSR_MUL, "DIV": CSR_DIV}

OPCODE_LOAD = 0x03
OPCODE_MISC_MEM = 0x0F
OPCODE_OP_IMM = 0x13
OPCODE_AUIPC = 0x17
OPCODE_STORE = 0x23
OPCODE_OP = 0x33
OPCODE_LUI = 0x37
OPCODE_BRANCH = 0x63
OPCODE_JALR = 0x67
OPCODE_JAL = 0x6F
OPCODE_SYSTEM = 0x73

OP_MNEMONICS = {
    (0x00, 0): "add", (0x20, 0): "sub", (0x00, 1): "sll", (0x00, 2): "slt",
    (0x00, 3): "sltu", (0x00, 4): "xor", (0x00, 5): "srl", (0x20, 5): "sra",
    (0x00, 6): "or", (0x00, 7): "and",
    (0x01, 0): "mul", (0x01, 1): "mulh", (0x01, 2): "mulhsu", (0x01, 3): "mulhu",
    (0x01, 4): "div", (0x01, 5): "divu", (0x01, 6): "rem", (0x01, 7): "remu",
}
OP_IMM_MNEMONICS = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
LOAD_MNEMONICS = {0: "lb", 1: "lh", 2: "lw", 4: "lbu", 5: "lhu"}
STORE_MNEMONICS = {0: "sb", 1: "sh", 2: "sw"}
BRANCH_MNEMONICS = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
CSR_MNEMONICS = {1: "csrrw", 2: "csrrs", 3: "csrrc", 5: "csrrwi", 6: "csrrsi", 7: "csrrci"}

ADD_CLASS = frozenset({"add", "addi", "sub"})
MUL_CLASS = frozenset({"mul"})
MULH_CLASS = frozenset({"mulh", "mulhsu", "mulhu"})
DIV_CLASS = frozenset({"div", "divu", "rem", "remu"})
ALU_OPS = frozenset(
    {"add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and"}
    | {"addi", "slti", "sltiu", "xori", "ori", "andi", "slli", "srli", "srai"}
)


class SimulatorFault(Exception):
    """Raised when an instruction cannot retire; the machine turns it into a fault halt."""


class IllegalInstruction(SimulatorFault):
    def __init__(self, raw: int, pc: int | None = None, reason: str = "illegal instruction") -> None:
        self.raw = raw & MASK32
        self.pc = pc
        self.reason = reason
        where = f" at pc=0x{pc:08x}" if pc is not None else ""
        super().__init__(f"{reason}: 0x{self.raw:08x}{where}")


class MisalignedAccess(SimulatorFault):
    pass


class MemoryFault(SimulatorFault):
    pass


class ConfigurationFault(SimulatorFault):
    pass


@dataclass(frozen=True)
class DecodedInstr:
    fmt: str
    mnemonic: str
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    raw: int = 0
    csr: int = 0

    @property
    def op_class(self) -> str:
        return op_class(self.mnemonic)

    @property
    def unit(self) -> str:
        return unit_for(self.mnemonic)


def op_class(mnemonic: str) -> str:
    if mnemonic in ADD_CLASS:
        return "add"
    if mnemonic in MUL_CLASS:
        return "mul"
    if mnemonic in MULH_CLASS:
        return "mulh"
    if mnemonic in DIV_CLASS:
        return "div"
    if mnemonic in LOAD_MNEMONICS.values():
        return "load"
    if mnemonic in STORE_MNEMONICS.values():
        return "store"
    if mnemonic in BRANCH_MNEMONICS.values() or mnemonic in ("jal", "jalr"):
        return "branch"
    return "other"


def unit_for(mnemonic: str) -> str:
    if mnemonic in MUL_CLASS or mnemonic in MULH_CLASS:
        return "MUL"
    if mnemonic in DIV_CLASS:
        return "DIV"
    if mnemonic in ALU_OPS:
        return "ALU"
    return "other"


def _sext(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value & (1 << (bits - 1)) else value


def decode(word: int, pc: int | None = None, num_regs: int = 16) -> DecodedInstr:
    """Decode one RV32IM word; register indices >= num_regs are illegal."""

    try:
        return _decode_cached(word & MASK32, num_regs)
    except IllegalInstruction as exc:
        raise IllegalInstruction(exc.raw, pc, exc.reason) from None


@lru_cache(maxsize=8192)
def _decode_cached(raw: int, num_regs: int) -> DecodedInstr:
    opcode = raw & 0x7F
    rd = (raw >> 7) & 0x1F
    funct3 = (raw >> 12) & 0x7
    rs1 = (raw >> 15) & 0x1F
    rs2 = (raw >> 20) & 0x1F
    funct7 = raw >> 25

    def regs(*indices: int) -> None:
        for index in indices:
            if index >= num_regs:
                raise IllegalInstruction(raw, reason=f"register x{index} not present in RV32E")

    if opcode == OPCODE_OP:
        mnemonic = OP_MNEMONICS.get((funct7, funct3))
        if mnemonic is None:
            raise IllegalInstruction(raw)
        regs(rd, rs1, rs2)
        return DecodedInstr("R", mnemonic, rd, rs1, rs2, 0, raw)

    if opcode == OPCODE_OP_IMM:
        imm = _sext(raw >> 20, 12)
        if funct3 == 1:
            if funct7 != 0:
                raise IllegalInstruction(raw)
            mnemonic, imm = "slli", rs2
        elif funct3 == 5:
            if funct7 == 0x00:
                mnemonic = "srli"
            elif funct7 == 0x20:
                mnemonic = "srai"
            else:
                raise IllegalInstruction(raw)
            imm = rs2
        else:
            mnemonic = OP_IMM_MNEMONICS[funct3]
        regs(rd, rs1)
        return DecodedInstr("I", mnemonic, rd, rs1, 0, imm, raw)

    if opcode == OPCODE_LOAD:
        mnemonic = LOAD_MNEMONICS.get(funct3)
        if mnemonic is None:
            raise IllegalInstruction(raw)
        regs(rd, rs1)
        return DecodedInstr("I", mnemonic, rd, rs1, 0, _sext(raw >> 20, 12), raw)

    if opcode == OPCODE_STORE:
        mnemonic = STORE_MNEMONICS.get(funct3)
        if mnemonic is None:
            raise IllegalInstruction(raw)
        regs(rs1, rs2)
        imm = _sext(((raw >> 25) << 5) | ((raw >> 7) & 0x1F), 12)
        return DecodedInstr("S", mnemonic, 0, rs1, rs2, imm, raw)

    if opcode == OPCODE_BRANCH:
        mnemonic = BRANCH_MNEMONICS.get(funct3)
        if mnemonic is None:
            raise IllegalInstruction(raw)
        regs(rs1, rs2)
        imm = _sext(
            (((raw >> 31) & 1) << 12)
            | (((raw >> 7) & 1) << 11)
            | (((raw >> 25) & 0x3F) << 5)
            | (((raw >> 8) & 0xF) << 1),
            13,
        )
        return DecodedInstr("B", mnemonic, 0, rs1, rs2, imm, raw)

    if opcode == OPCODE_LUI or opcode == OPCODE_AUIPC:
        regs(rd)
        mnemonic = "lui" if opcode == OPCODE_LUI else "auipc"
        return DecodedInstr("U", mnemonic, rd, 0, 0, _sext(raw & 0xFFFFF000, 32), raw)

    if opcode == OPCODE_JAL:
        regs(rd)
        imm = _sext(
            (((raw >> 31) & 1) << 20)
            | (((raw >> 12) & 0xFF) << 12)
            | (((raw >> 20) & 1) << 11)
            | (((raw >> 21) & 0x3FF) << 1),
            21,
        )
        return DecodedInstr("J", "jal", rd, 0, 0, imm, raw)

    if opcode == OPCODE_JALR:
        if funct3 != 0:
            raise IllegalInstruction(raw)
        regs(rd, rs1)
        return DecodedInstr("I", "jalr", rd, rs1, 0, _sext(raw >> 20, 12), raw)

    if opcode == OPCODE_MISC_MEM:
        if funct3 not in (0, 1):
            raise IllegalInstruction(raw)
        return DecodedInstr("I", "fence" if funct3 == 0 else "fence.i", 0, 0, 0, 0, raw)

    if opcode == OPCODE_SYSTEM:
        if funct3 == 0:
            if raw == 0x00000073:
                return DecodedInstr("SYSTEM", "ecall", raw=raw)
            if raw == 0x00100073:
                return DecodedInstr("SYSTEM", "ebreak", raw=raw)
            raise IllegalInstruction(raw)
        mnemonic = CSR_MNEMONICS.get(funct3)
        if mnemonic is None:
            raise IllegalInstruction(raw)
        csr = raw >> 20
        if mnemonic.endswith("i"):
            regs(rd)
            return DecodedInstr("SYSTEM", mnemonic, rd, 0, 0, rs1, raw, csr)
        regs(rd, rs1)
        return DecodedInstr("SYSTEM", mnemonic, rd, rs1, 0, 0, raw, csr)

    raise IllegalInstruction(raw)


def disassemble(instr: DecodedInstr) -> str:
    m = instr.mnemonic
    if instr.fmt == "R":
        return f"{m} x{instr.rd}, x{instr.rs1}, x{instr.rs2}"
    if m in LOAD_MNEMONICS.values() or m == "jalr":
        return f"{m} x{instr.rd}, {instr.imm}(x{instr.rs1})"
    if instr.fmt == "I" and m.startswith("fence"):
        return m
    if instr.fmt == "I":
        return f"{m} x{instr.rd}, x{instr.rs1}, {instr.imm}"
    if instr.fmt == "S":
        return f"{m} x{instr.rs2}, {instr.imm}(x{instr.rs1})"
    if instr.fmt == "B":
        return f"{m} x{instr.rs1}, x{instr.rs2}, {instr.imm}"
    if instr.fmt == "U":
        return f"{m} x{instr.rd}, 0x{(instr.imm & MASK32) >> 12:x}"
    if instr.fmt == "J":
        return f"{m} x{instr.rd}, {instr.imm}"
    if m.startswith("csr"):
        source = f"{instr.imm}" if m.endswith("i") else f"x{instr.rs1}"
        return f"{m} x{instr.rd}, 0x{instr.csr:03x}, {source}"
    return m


@dataclass
class CsrFile:
    """Approximation-control CSRs plus the 64-bit cycle/instret counters."""

    alucsr: int = 0
    mulcsr: int = 0
    divcsr: int = 0
    cycle: int = 0
    instret: int = 0

    def read(self, addr: int) -> int:
        if addr in APPROX_CSRS:
            return getattr(self, APPROX_CSRS[addr]) & MASK32
        if addr == CSR_CYCLE:
            return self.cycle & MASK32
        if addr == CSR_CYCLEH:
            return (self.cycle >> 32) & MASK32
        if addr == CSR_INSTRET:
            return self.instret & MASK32
        if addr == CSR_INSTRETH:
            return (self.instret >> 32) & MASK32
        raise KeyError(addr)

    def write(self, addr: int, value: int) -> None:
        if addr not in APPROX_CSRS:
            raise KeyError(addr)
        setattr(self, APPROX_CSRS[addr], value & MASK32)

    def control(self, unit: str) -> ApproxControlWord:
        return ApproxControlWord.from_word(self.read(UNIT_CSR[unit]))

    def as_dict(self) -> Dict[str, str]:
        return {name: f"0x{getattr(self, name):08x}" for name in APPROX_CSRS.values()}


def csr_access(
    csrs: CsrFile,
    op: str,
    addr: int,
    operand: int,
    *,
    writes: bool | None = None,
    raw: int = 0,
    pc: int | None = None,
) -> int:
    """Read-modify-write one CSR and return its previous value.

    `writes` defaults to the RISC-V rule: csrrw always writes, the set/clear
    forms write only for a non-zero operand source.
    """

    if addr not in APPROX_CSRS and addr not in COUNTER_CSRS:
        raise IllegalInstruction(raw, pc, reason=f"unimplemented CSR 0x{addr:03x}")
    kind = op[:-1] if op.endswith("i") else op
    if writes is None:
        writes = kind == "csrrw" or operand != 0
    old = csrs.read(addr)
    if not writes:
        return old
    if addr in COUNTER_CSRS:
        raise IllegalInstruction(raw, pc, reason=f"write to read-only CSR 0x{addr:03x}")
    if kind == "csrrw":
        new = operand
    elif kind == "csrrs":
        new = old | operand
    elif kind == "csrrc":
        new = old & ~operand
    else:
        raise ValueError(f"Unknown CSR op {op!r}")
    csrs.write(addr, new & MASK32)
    return old


@dataclass(frozen=True)
class Route:
    unit: str
    slot: int
    kind: SlotKind


DEFAULT_SLOTS = CircuitSlotTable.default_build()


def select_circuit(
    unit: str,
    mnemonic: str,
    csrs: CsrFile,
    slots: CircuitSlotTable = DEFAULT_SLOTS,
) -> Route:
    """Pick the circuit slot an instruction executes on.

    mulhsu/mulhu stay on the accurate default slot; everything else follows
    the unit CSR's circuit select when approximation is enabled.
    """

    word = csrs.read(UNIT_CSR[unit])
    if unit == "MUL" and mnemonic in ("mulhsu", "mulhu"):
        index = 0
    else:
        index = (word >> 1) & 0x3 if word & 1 else 0
    slot = slots.slot(unit, index)
    if slot is None:
        raise ConfigurationFault(
            f"{unit} circuit slot {index} is empty (csr=0x{word:08x})"
        )
    return Route(unit, index, slot.kind)


def address_gen(base: int, offset: int) -> int:
    """Effective addresses and branch targets always use the exact adder."""

    return (base + offset) & MASK32


def execute_arith(
    instr: DecodedInstr,
    regs: Sequence[int],
    csrs: CsrFile,
    slots: CircuitSlotTable = DEFAULT_SLOTS,
    *,
    route: Route | None = None,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> int:
    """Write-back value of an OP / OP-IMM instruction under the current CSRs."""

    m = instr.mnemonic
    unit = unit_for(m)
    if unit not in UNIT_CSR:
        raise ValueError(f"{m} is not an arithmetic instruction")
    if route is None:
        route = select_circuit(unit, m, csrs, slots)
    a = regs[instr.rs1]
    b = regs[instr.rs2] if instr.fmt == "R" else instr.imm & MASK32

    if unit == "MUL":
        word = csrs.mulcsr
        approximate = route.kind is SlotKind.APPROXIMATE and m in ("mul", "mulh")
        if approximate:
            cfg = ApproxControlWord.from_word(word).mul_config()
            return mul32_signed(a, b, m == "mulh", cfg, table=table)
        if m == "mul":
            return (a * b) & MASK32
        if m == "mulh":
            return ((to_signed32(a) * to_signed32(b)) >> 32) & MASK32
        if m == "mulhsu":
            return ((to_signed32(a) * b) >> 32) & MASK32
        return ((a * b) >> 32) & MASK32

    if unit == "DIV":
        return exact_div(a, b, m)

    if m in ADD_CLASS:
        if csrs.alucsr & 1 and route.kind is SlotKind.APPROXIMATE:
            cfg = ApproxControlWord.from_word(csrs.alucsr).adder_config()
        else:
            cfg = AdderConfig.accurate()
        if m == "sub":
            return alu_sub(a, b, cfg, table=table)
        return alu_add(a, b, cfg, table=table)
    if m in ("sll", "slli"):
        return (a << (b & 0x1F)) & MASK32
    if m in ("srl", "srli"):
        return a >> (b & 0x1F)
    if m in ("sra", "srai"):
        return (to_signed32(a) >> (b & 0x1F)) & MASK32
    if m in ("slt", "slti"):
        return int(to_signed32(a) < to_signed32(b))
    if m in ("sltu", "sltiu"):
        return int(a < b)
    if m in ("xor", "xori"):
        return a ^ b
    if m in ("or", "ori"):
        return a | b
    if m in ("and", "andi"):
        return a & b
    raise ValueError(f"Unhandled arithmetic instruction {m!r}")
