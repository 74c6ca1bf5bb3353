"""Benchmark kernels generated as RV32IEM instruction streams.

Every kernel is linked at address 0 with its input data at DATA_BASE, writes
its results to the MMIO output word and halts through the MMIO halt word.
Loops are counted, so control flow never depends on computed values.

Operand order follows the assembly text: ``lw rd, imm(rs1)`` is
``encode("lw", rd, imm, rs1)`` and ``sw rs2, imm(rs1)`` is
``encode("sw", rs2, imm, rs1)``.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .circuits import MASK32, exact_div, to_signed32
from .isa import (
    BRANCH_MNEMONICS,
    CSR_MNEMONICS,
    LOAD_MNEMONICS,
    OP_IMM_MNEMONICS,
    OP_MNEMONICS,
    OPCODE_AUIPC,
    OPCODE_BRANCH,
    OPCODE_JAL,
    OPCODE_JALR,
    OPCODE_LOAD,
    OPCODE_LUI,
    OPCODE_OP,
    OPCODE_OP_IMM,
    OPCODE_STORE,
    OPCODE_SYSTEM,
    STORE_MNEMONICS,
    op_class,
)
from .models import KernelSpec
from .storage import words_to_bytes

logger = logging.getLogger(__name__)

DATA_BASE = 0x8000
MAX_DATA_BYTES = 1 << 20
MMIO_BASE_UPPER = 0xF0000
MMIO_REG = 15

# Compiled-code reference figures, kept as metadata only.
REFERENCE_MUL_SHARE = 0.0647
REFERENCE_AVG_INSTRUCTIONS = 221_992
REFERENCE_AVG_MUL_COUNT = 242

MIX_CLASSES = ("add", "mul", "mulh", "div", "load", "store", "branch", "other")
ARITH_CLASSES = ("add", "mul", "mulh", "div")

_R_CODES = {name: key for key, name in OP_MNEMONICS.items()}
_I_CODES = {name: funct3 for funct3, name in OP_IMM_MNEMONICS.items()}
_SHIFT_CODES = {"slli": (0x00, 1), "srli": (0x00, 5), "srai": (0x20, 5)}
_LOAD_CODES = {name: funct3 for funct3, name in LOAD_MNEMONICS.items()}
_STORE_CODES = {name: funct3 for funct3, name in STORE_MNEMONICS.items()}
_BRANCH_CODES = {name: funct3 for funct3, name in BRANCH_MNEMONICS.items()}
_CSR_CODES = {name: funct3 for funct3, name in CSR_MNEMONICS.items()}


def _reg(value: int, num_regs: int) -> int:
    if not isinstance(value, int) or not 0 <= value < num_regs:
        raise ValueError(f"register x{value} is out of range for a {num_regs}-register file")
    return value


def _imm(value: int, low: int, high: int, what: str, *, even: bool = False) -> int:
    if not isinstance(value, int) or not low <= value <= high:
        raise ValueError(f"{what} {value!r} is outside [{low}, {high}]")
    if even and value % 2:
        raise ValueError(f"{what} {value!r} must be even")
    return value


def encode(mnemonic: str, *operands: int, num_regs: int = 16) -> int:
    """Canonical RISC-V encoding of one instruction."""

    m = mnemonic.lower()

    def expect(count: int) -> None:
        if len(operands) != count:
            raise ValueError(f"{m} takes {count} operands, got {len(operands)}")

    if m in _R_CODES:
        expect(3)
        rd, rs1, rs2 = (_reg(op, num_regs) for op in operands)
        funct7, funct3 = _R_CODES[m]
        return (funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | OPCODE_OP
    if m in _I_CODES:
        expect(3)
        rd, rs1 = _reg(operands[0], num_regs), _reg(operands[1], num_regs)
        imm = _imm(operands[2], -2048, 2047, f"{m} immediate")
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (_I_CODES[m] << 12) | (rd << 7) | OPCODE_OP_IMM
    if m in _SHIFT_CODES:
        expect(3)
        rd, rs1 = _reg(operands[0], num_regs), _reg(operands[1], num_regs)
        shamt = _imm(operands[2], 0, 31, f"{m} shift amount")
        funct7, funct3 = _SHIFT_CODES[m]
        return (funct7 << 25) | (shamt << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | OPCODE_OP_IMM
    if m in _LOAD_CODES or m == "jalr":
        expect(3)
        rd, imm, rs1 = operands
        rd, rs1 = _reg(rd, num_regs), _reg(rs1, num_regs)
        imm = _imm(imm, -2048, 2047, f"{m} offset")
        opcode, funct3 = (OPCODE_JALR, 0) if m == "jalr" else (OPCODE_LOAD, _LOAD_CODES[m])
        return ((imm & 0xFFF) << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode
    if m in _STORE_CODES:
        expect(3)
        rs2, imm, rs1 = operands
        rs2, rs1 = _reg(rs2, num_regs), _reg(rs1, num_regs)
        imm = _imm(imm, -2048, 2047, f"{m} offset") & 0xFFF
        return (
            ((imm >> 5) << 25)
            | (rs2 << 20)
            | (rs1 << 15)
            | (_STORE_CODES[m] << 12)
            | ((imm & 0x1F) << 7)
            | OPCODE_STORE
        )
    if m in _BRANCH_CODES:
        expect(3)
        rs1, rs2 = _reg(operands[0], num_regs), _reg(operands[1], num_regs)
        imm = _imm(operands[2], -4096, 4094, f"{m} offset", even=True) & 0x1FFF
        return (
            (((imm >> 12) & 1) << 31)
            | (((imm >> 5) & 0x3F) << 25)
            | (rs2 << 20)
            | (rs1 << 15)
            | (_BRANCH_CODES[m] << 12)
            | (((imm >> 1) & 0xF) << 8)
            | (((imm >> 11) & 1) << 7)
            | OPCODE_BRANCH
        )
    if m in ("lui", "auipc"):
        expect(2)
        rd = _reg(operands[0], num_regs)
        upper = _imm(operands[1], 0, 0xFFFFF, f"{m} immediate")
        return (upper << 12) | (rd << 7) | (OPCODE_LUI if m == "lui" else OPCODE_AUIPC)
    if m == "jal":
        expect(2)
        rd = _reg(operands[0], num_regs)
        imm = _imm(operands[1], -(1 << 20), (1 << 20) - 2, "jal offset", even=True) & 0x1FFFFF
        return (
            (((imm >> 20) & 1) << 31)
            | (((imm >> 1) & 0x3FF) << 21)
            | (((imm >> 11) & 1) << 20)
            | (((imm >> 12) & 0xFF) << 12)
            | (rd << 7)
            | OPCODE_JAL
        )
    if m in _CSR_CODES:
        expect(3)
        rd = _reg(operands[0], num_regs)
        csr = _imm(operands[1], 0, 0xFFF, "CSR address")
        if m.endswith("i"):
            source = _imm(operands[2], 0, 31, f"{m} immediate")
        else:
            source = _reg(operands[2], num_regs)
        return (csr << 20) | (source << 15) | (_CSR_CODES[m] << 12) | (rd << 7) | OPCODE_SYSTEM
    if m in ("ecall", "ebreak", "fence"):
        expect(0)
        return {"ecall": 0x00000073, "ebreak": 0x00100073, "fence": 0x0FF0000F}[m]
    if m == "nop":
        expect(0)
        return encode("addi", 0, 0, 0)
    raise ValueError(f"Unknown mnemonic: {mnemonic}")


class ProgramBuilder:
    """Straight-line emitter with a `li` pseudo-instruction and counted loops."""

    def __init__(self, num_regs: int = 16) -> None:
        self.words: List[int] = []
        self.num_regs = num_regs

    def emit(self, mnemonic: str, *operands: int) -> "ProgramBuilder":
        self.words.append(encode(mnemonic, *operands, num_regs=self.num_regs))
        return self

    def here(self) -> int:
        return len(self.words)

    def li(self, rd: int, value: int) -> "ProgramBuilder":
        value = to_signed32(value)
        if -2048 <= value <= 2047:
            return self.emit("addi", rd, 0, value)
        low = to_signed32((value & 0xFFF) << 20) >> 20
        upper = ((value - low) >> 12) & 0xFFFFF
        self.emit("lui", rd, upper)
        if low:
            self.emit("addi", rd, rd, low)
        return self

    def branch_back(self, mnemonic: str, rs1: int, rs2: int, target: int) -> "ProgramBuilder":
        return self.emit(mnemonic, rs1, rs2, (target - self.here()) * 4)

    def count_down(self, counter: int, target: int) -> "ProgramBuilder":
        """Close a counted loop that started at word index `target`."""

        self.emit("addi", counter, counter, -1)
        return self.branch_back("bne", counter, 0, target)

    def mmio_setup(self) -> "ProgramBuilder":
        return self.emit("lui", MMIO_REG, MMIO_BASE_UPPER)

    def output(self, reg: int) -> "ProgramBuilder":
        return self.emit("sw", reg, 0, MMIO_REG)

    def halt(self, code_reg: int = 0) -> "ProgramBuilder":
        return self.emit("sw", code_reg, 4, MMIO_REG)


def csr_prologue(presets: Mapping[int, int], scratch: int = 1) -> List[int]:
    """csrrw writes installing CSR presets as real instructions."""

    builder = ProgramBuilder()
    for addr, value in sorted(presets.items()):
        builder.li(scratch, value)
        builder.emit("csrrw", 0, addr, scratch)
    return builder.words


@dataclass(frozen=True)
class EncodedProgram:
    name: str
    words: Tuple[int, ...]
    data: bytes
    reference: Tuple[int, ...]
    mul_count: int
    spec: KernelSpec
    data_base: int = DATA_BASE
    entry: int = 0

    @property
    def output_len(self) -> int:
        return len(self.reference)

    def image(self) -> bytes:
        code = words_to_bytes(self.words)
        if len(code) > self.data_base:
            raise ValueError(f"code of {len(code)} bytes overlaps data at 0x{self.data_base:x}")
        if not self.data:
            return code
        return code + bytes(self.data_base - len(code)) + self.data

    def with_prologue(self, words: Sequence[int]) -> "EncodedProgram":
        return replace(self, words=tuple(words) + self.words)


@dataclass(frozen=True)
class KernelInfo:
    generator: Callable[[KernelSpec], EncodedProgram]
    defaults: Dict[str, int]
    description: str


def _rng(spec: KernelSpec) -> np.random.Generator:
    return np.random.default_rng(spec.seed)


def _u32(values: Iterable[int]) -> Tuple[int, ...]:
    return tuple(int(value) & MASK32 for value in values)


def _program(
    spec: KernelSpec,
    builder: ProgramBuilder,
    data_words: Sequence[int],
    reference: Iterable[int],
    mul_count: int,
) -> EncodedProgram:
    data = words_to_bytes(_u32(data_words))
    if len(data) > MAX_DATA_BYTES:
        raise ValueError(f"{spec.name} input of {len(data)} bytes exceeds {MAX_DATA_BYTES} bytes")
    if len(builder.words) * 4 > DATA_BASE:
        raise ValueError(f"{spec.name} code of {len(builder.words)} words exceeds the code region")
    return EncodedProgram(
        name=spec.name,
        words=tuple(builder.words),
        data=data,
        reference=_u32(reference),
        mul_count=mul_count,
        spec=spec,
    )


def _factorial(spec: KernelSpec) -> EncodedProgram:
    n = spec.params["n"]
    b = ProgramBuilder().mmio_setup()
    b.li(1, 1).li(2, 1).li(3, n)
    top = b.here()
    b.emit("mul", 1, 1, 2).output(1).emit("addi", 2, 2, 1)
    b.count_down(3, top).halt()

    reference, acc = [], 1
    for k in range(1, n + 1):
        acc = (acc * k) & MASK32
        reference.append(acc)
    return _program(spec, b, [], reference, n)


def _matmul(spec: KernelSpec) -> EncodedProgram:
    n = spec.params["n"]
    rng = _rng(spec)
    a = rng.integers(0, 256, size=(n, n), dtype=np.int64)
    m = rng.integers(0, 256, size=(n, n), dtype=np.int64)
    a_base = DATA_BASE
    b_base = DATA_BASE + n * n * 4

    b = ProgramBuilder().mmio_setup()
    b.li(11, n * 4).li(1, a_base).li(9, n)
    row = b.here()
    b.li(2, b_base).li(10, n)
    col = b.here()
    b.emit("addi", 3, 0, 0).emit("addi", 5, 1, 0).emit("addi", 6, 2, 0).li(4, n)
    inner = b.here()
    b.emit("lw", 7, 0, 5).emit("lw", 8, 0, 6).emit("mul", 7, 7, 8).emit("add", 3, 3, 7)
    b.emit("addi", 5, 5, 4).emit("add", 6, 6, 11)
    b.count_down(4, inner)
    b.output(3).emit("addi", 2, 2, 4)
    b.count_down(10, col)
    b.emit("add", 1, 1, 11)
    b.count_down(9, row).halt()

    reference = (a @ m).reshape(-1)
    return _program(spec, b, a.reshape(-1).tolist() + m.reshape(-1).tolist(), reference, n**3)


def _conv2d(spec: KernelSpec, k: int) -> EncodedProgram:
    height, width = spec.params["height"], spec.params["width"]
    if height < k or width < k:
        raise ValueError(f"{spec.name} needs an image of at least {k}x{k}, got {height}x{width}")
    if ((k - 1) * width + k) * 4 > 2047:
        raise ValueError(f"{spec.name} image width {width} is too wide for immediate offsets")
    rng = _rng(spec)
    image = rng.integers(0, 256, size=(height, width), dtype=np.int64)
    weights = rng.integers(-7, 8, size=(k, k), dtype=np.int64)
    out_h, out_w = height - k + 1, width - k + 1
    kernel_base = DATA_BASE + height * width * 4

    b = ProgramBuilder().mmio_setup()
    b.li(1, DATA_BASE).li(6, kernel_base).li(12, width * 4).li(9, out_h)
    row = b.here()
    b.emit("addi", 2, 1, 0).li(10, out_w)
    col = b.here()
    b.emit("addi", 3, 0, 0)
    for i in range(k):
        for j in range(k):
            b.emit("lw", 7, (i * width + j) * 4, 2)
            b.emit("lw", 8, (i * k + j) * 4, 6)
            b.emit("mul", 7, 7, 8).emit("add", 3, 3, 7)
    b.output(3).emit("addi", 2, 2, 4)
    b.count_down(10, col)
    b.emit("add", 1, 1, 12)
    b.count_down(9, row).halt()

    reference = [
        int(np.sum(image[y : y + k, x : x + k] * weights))
        for y in range(out_h)
        for x in range(out_w)
    ]
    data = image.reshape(-1).tolist() + [int(w) & MASK32 for w in weights.reshape(-1)]
    return _program(spec, b, data, reference, out_h * out_w * k * k)


def _fir(spec: KernelSpec) -> EncodedProgram:
    taps, samples = spec.params["taps"], spec.params["samples"]
    if taps * 4 > 2047:
        raise ValueError(f"fir_int supports at most 511 taps, got {taps}")
    rng = _rng(spec)
    signal = rng.integers(0, 256, size=samples + taps - 1, dtype=np.int64)
    coeffs = rng.integers(-7, 8, size=taps, dtype=np.int64)
    coeff_base = DATA_BASE + len(signal) * 4

    b = ProgramBuilder().mmio_setup()
    b.li(1, DATA_BASE).li(6, coeff_base).li(4, samples)
    top = b.here()
    b.emit("addi", 3, 0, 0)
    for t in range(taps):
        b.emit("lw", 7, (taps - 1 - t) * 4, 1)
        b.emit("lw", 8, t * 4, 6)
        b.emit("mul", 7, 7, 8).emit("add", 3, 3, 7)
    b.output(3).emit("addi", 1, 1, 4)
    b.count_down(4, top).halt()

    reference = [
        int(sum(coeffs[t] * signal[n + taps - 1 - t] for t in range(taps)))
        for n in range(samples)
    ]
    data = signal.tolist() + [int(c) & MASK32 for c in coeffs]
    return _program(spec, b, data, reference, samples * taps)


IIR_B0, IIR_B1, IIR_A1, IIR_SCALE = 5, 3, 7, 16


def _iir(spec: KernelSpec) -> EncodedProgram:
    samples = spec.params["samples"]
    signal = _rng(spec).integers(0, 256, size=samples, dtype=np.int64)

    b = ProgramBuilder().mmio_setup()
    b.li(1, DATA_BASE).li(2, 0).li(3, 0).li(4, samples)
    b.li(5, IIR_B0).li(6, IIR_B1).li(7, IIR_A1).li(8, IIR_SCALE)
    top = b.here()
    b.emit("lw", 9, 0, 1)
    b.emit("mul", 10, 9, 5).emit("mul", 11, 2, 6).emit("add", 10, 10, 11)
    b.emit("mul", 11, 3, 7).emit("add", 10, 10, 11)
    b.emit("div", 3, 10, 8).output(3)
    b.emit("addi", 2, 9, 0).emit("addi", 1, 1, 4)
    b.count_down(4, top).halt()

    reference, x_prev, y_prev = [], 0, 0
    for x in (int(v) for v in signal):
        acc = (IIR_B0 * x + IIR_B1 * x_prev + IIR_A1 * y_prev) & MASK32
        y_prev = exact_div(acc, IIR_SCALE, "div")
        x_prev = x
        reference.append(y_prev)
    return _program(spec, b, signal.tolist(), reference, 3 * samples)


NR_START = 256


def _nr_solver(spec: KernelSpec) -> EncodedProgram:
    """Integer square roots by a fixed number of Newton-Raphson steps."""

    count, iterations = spec.params["count"], spec.params["iterations"]
    values = _rng(spec).integers(1, 65536, size=count, dtype=np.int64)

    b = ProgramBuilder().mmio_setup()
    b.li(1, DATA_BASE).li(2, count)
    top = b.here()
    b.emit("lw", 3, 0, 1).li(4, NR_START).li(5, iterations)
    newton = b.here()
    b.emit("divu", 6, 3, 4).emit("add", 6, 6, 4).emit("srli", 4, 6, 1)
    b.count_down(5, newton)
    b.output(4).emit("mul", 6, 4, 4).emit("sub", 6, 3, 6).output(6)
    b.emit("addi", 1, 1, 4)
    b.count_down(2, top).halt()

    reference = []
    for v in (int(value) for value in values):
        x = NR_START
        for _ in range(iterations):
            x = (v // x + x) >> 1
        reference.extend([x, v - x * x])
    return _program(spec, b, values.tolist(), reference, count)


KERNELS: Dict[str, KernelInfo] = {
    "conv2d3x3": KernelInfo(
        lambda spec: _conv2d(spec, 3), {"height": 16, "width": 16}, "3x3 valid convolution"
    ),
    "conv2d5x5": KernelInfo(
        lambda spec: _conv2d(spec, 5), {"height": 12, "width": 12}, "5x5 valid convolution"
    ),
    "fir_int": KernelInfo(_fir, {"taps": 16, "samples": 48}, "integer FIR filter"),
    "iir_int": KernelInfo(_iir, {"samples": 64}, "first-order integer IIR filter"),
    "matmul_int": KernelInfo(_matmul, {"n": 8}, "n x n integer matrix multiply"),
    "nr_solver": KernelInfo(
        _nr_solver, {"count": 16, "iterations": 12}, "Newton-Raphson integer square root"
    ),
    "factorial": KernelInfo(_factorial, {"n": 10}, "running factorials 1!..n!"),
}
KERNEL_ALIASES = {"matmul": "matmul_int", "fir": "fir_int", "iir": "iir_int", "nr": "nr_solver"}


def resolve_kernel(name: str) -> str:
    name = KERNEL_ALIASES.get(name, name)
    if name not in KERNELS:
        raise KeyError(f"Unknown kernel: {name}")
    return name


def default_spec(name: str, seed: int = 0, **overrides: int) -> KernelSpec:
    name = resolve_kernel(name)
    unknown = sorted(set(overrides) - set(KERNELS[name].defaults))
    if unknown:
        raise ValueError(f"{name} has no parameter(s) {', '.join(unknown)}")
    return KernelSpec(name=name, params={**KERNELS[name].defaults, **overrides}, seed=seed)


def generate(spec: KernelSpec) -> EncodedProgram:
    name = resolve_kernel(spec.name)
    info = KERNELS[name]
    unknown = sorted(set(spec.params) - set(info.defaults))
    if unknown:
        raise ValueError(f"{name} has no parameter(s) {', '.join(unknown)}")
    spec = KernelSpec(name=name, params={**info.defaults, **spec.params}, seed=spec.seed)
    program = info.generator(spec)
    logger.info(
        "kernel_generated name=%s seed=%s words=%s outputs=%s muls=%s",
        name,
        spec.seed,
        len(program.words),
        program.output_len,
        program.mul_count,
    )
    return program


@dataclass(frozen=True)
class InstructionMix:
    counts: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def arithmetic(self) -> int:
        return sum(self.counts.get(cls, 0) for cls in ARITH_CLASSES)

    @property
    def mul_share(self) -> float:
        arithmetic = self.arithmetic
        if not arithmetic:
            return 0.0
        return (self.counts.get("mul", 0) + self.counts.get("mulh", 0)) / arithmetic

    def to_dict(self) -> Dict[str, object]:
        return {
            "counts": dict(self.counts),
            "total": self.total,
            "arithmetic": self.arithmetic,
            "mul_share": self.mul_share,
            "reference_mul_share": REFERENCE_MUL_SHARE,
            "reference_avg_instructions": REFERENCE_AVG_INSTRUCTIONS,
            "reference_avg_mul_count": REFERENCE_AVG_MUL_COUNT,
        }


def instruction_mix(trace: Iterable[object] | Mapping[str, int]) -> InstructionMix:
    """Per-class retirement counts from trace events or a class-count mapping."""

    if isinstance(trace, Mapping):
        counts = {cls: int(trace.get(cls, 0)) for cls in MIX_CLASSES}
    else:
        tally = Counter(op_class(event.mnemonic) for event in trace)
        counts = {cls: tally.get(cls, 0) for cls in MIX_CLASSES}
    return InstructionMix(counts=counts)
