"""Bit-accurate models of the execution-stage arithmetic circuits.

Every approximate circuit here is built from one error-controllable full
adder.  Its approximate truth table keeps the carry exact, so an approximate
position only ever disturbs its own sum bit: the total error of a ripple is
``sum(e_k * 2**k)`` with ``e_k`` in {-1, 0, +1} over the approximate positions.
"""

from __future__ import annotations

from enum import IntEnum
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np

from .models import MUL_MASK_ACCURATE, AdderConfig, MulConfig

MASK32 = 0xFFFFFFFF
MASK64 = 0xFFFFFFFFFFFFFFFF

# (sum, cout) indexed by (a << 2) | (b << 1) | cin.
FullAdderTable = Tuple[Tuple[int, int], ...]


def _table(sum_fn) -> FullAdderTable:
    rows = []
    for index in range(8):
        a, b, cin = (index >> 2) & 1, (index >> 1) & 1, index & 1
        majority = (a & b) | (cin & (a ^ b))
        rows.append((sum_fn(a, b, cin), majority))
    return tuple(rows)


EXACT_FA: FullAdderTable = _table(lambda a, b, cin: a ^ b ^ cin)
# Approximate sum passes operand a through; errs on rows 001, 010 (-1) and 101, 110 (+1).
APPROX_FA_PASS_A: FullAdderTable = _table(lambda a, b, cin: a)
# Approximate sum passes the carry-in through; errs on rows 010, 100 (-1) and 011, 101 (+1).
APPROX_FA_PASS_CIN: FullAdderTable = _table(lambda a, b, cin: cin)

DEFAULT_APPROX_FA = APPROX_FA_PASS_A

# Final adder of the 8x8 multiplier spans product bits 4..15; bits 4..10 are controllable.
FINAL_ADDER_LOW = 4
FINAL_ADDER_HIGH = 15
MUL_CONTROLLED_POSITIONS = 7


class FullAdderMode(IntEnum):
    APPROXIMATE = 0
    ACCURATE = 1


def full_adder(
    a: int,
    b: int,
    cin: int,
    mode: int = FullAdderMode.ACCURATE,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Tuple[int, int]:
    rows = EXACT_FA if mode else table
    return rows[((a & 1) << 2) | ((b & 1) << 1) | (cin & 1)]


def eca4_add(
    x: int,
    y: int,
    cin: int,
    error_lines: int,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Tuple[int, int]:
    """4-bit error-controllable ripple-carry adder block."""

    carry = cin & 1
    total = 0
    for bit in range(4):
        s, carry = full_adder(
            (x >> bit) & 1,
            (y >> bit) & 1,
            carry,
            (error_lines >> bit) & 1,
            table=table,
        )
        total |= s << bit
    return total, carry


def csa32_add(
    x: int,
    y: int,
    cin: int,
    cfg: AdderConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Tuple[int, int]:
    """Carry-select adder of eight ECA blocks; blocks 1..7 precompute both carries."""

    mask = cfg.effective_mask
    total, carry = eca4_add(x & 0xF, y & 0xF, cin, mask & 0xF, table=table)
    for block in range(1, 8):
        shift = 4 * block
        xb = (x >> shift) & 0xF
        yb = (y >> shift) & 0xF
        lines = (mask >> shift) & 0xF
        sum0, carry0 = eca4_add(xb, yb, 0, lines, table=table)
        sum1, carry1 = eca4_add(xb, yb, 1, lines, table=table)
        if carry:
            total |= sum1 << shift
            carry = carry1
        else:
            total |= sum0 << shift
            carry = carry0
    return total, carry


def ripple32_add(
    x: int,
    y: int,
    cin: int,
    cfg: AdderConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Tuple[int, int]:
    mask = cfg.effective_mask
    carry = cin & 1
    total = 0
    for bit in range(32):
        s, carry = full_adder((x >> bit) & 1, (y >> bit) & 1, carry, (mask >> bit) & 1, table=table)
        total |= s << bit
    return total, carry


def alu_add(x: int, y: int, cfg: AdderConfig, *, table: FullAdderTable = DEFAULT_APPROX_FA) -> int:
    if cfg.is_exact:
        return (x + y + cfg.carry_in) & MASK32
    return csa32_add(x & MASK32, y & MASK32, cfg.carry_in, cfg, table=table)[0]


def alu_sub(x: int, y: int, cfg: AdderConfig, *, table: FullAdderTable = DEFAULT_APPROX_FA) -> int:
    if cfg.is_exact:
        return (x - y) & MASK32
    return csa32_add(x & MASK32, ~y & MASK32, 1, cfg, table=table)[0]


def _partial_product_operands(a: int, b: int) -> Tuple[int, int]:
    even = 0
    odd = 0
    for row in range(8):
        if (b >> row) & 1:
            if row % 2:
                odd += a << row
            else:
                even += a << row
    return even, odd


def _line_for_position(error_mask: int, position: int) -> int:
    k = position - FINAL_ADDER_LOW
    if k >= MUL_CONTROLLED_POSITIONS:
        return 1
    return (error_mask >> k) & 1


def _truncate(value: int, bits: int) -> int:
    return value & ~((1 << bits) - 1)


def approx_mul8(
    a: int,
    b: int,
    cfg: MulConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> int:
    """8x8 unsigned multiplier with an error-controllable 12-bit final adder."""

    even, odd = _partial_product_operands(a & 0xFF, b & 0xFF)
    low = (even & 0xF) + (odd & 0xF)
    product = low & 0xF
    carry = low >> 4
    for position in range(FINAL_ADDER_LOW, FINAL_ADDER_HIGH + 1):
        s, carry = full_adder(
            (even >> position) & 1,
            (odd >> position) & 1,
            carry,
            _line_for_position(cfg.error_mask, position),
            table=table,
        )
        product |= s << position
    return _truncate(product, cfg.truncation) & 0xFFFF


def operand_grid() -> Tuple[np.ndarray, np.ndarray]:
    """All 65,536 (a, b) pairs of 8-bit operands, `a` major."""

    values = np.arange(256, dtype=np.int64)
    a, b = np.meshgrid(values, values, indexing="ij")
    return a.ravel(), b.ravel()


def _final_stage_array(
    a: np.ndarray,
    b: np.ndarray,
    cfg: MulConfig,
    table: FullAdderTable,
) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.int64) & 0xFF
    b = np.asarray(b, dtype=np.int64) & 0xFF
    a, b = np.broadcast_arrays(a, b)
    even = np.zeros(a.shape, dtype=np.int64)
    odd = np.zeros(a.shape, dtype=np.int64)
    for row in range(8):
        partial = np.where((b >> row) & 1, a << row, 0)
        if row % 2:
            odd += partial
        else:
            even += partial

    exact_sum = np.array([row[0] for row in EXACT_FA], dtype=np.int64)
    exact_cout = np.array([row[1] for row in EXACT_FA], dtype=np.int64)
    approx_sum = np.array([row[0] for row in table], dtype=np.int64)
    approx_cout = np.array([row[1] for row in table], dtype=np.int64)

    low = (even & 0xF) + (odd & 0xF)
    product = low & 0xF
    carry = low >> 4
    positions = FINAL_ADDER_HIGH - FINAL_ADDER_LOW + 1
    errors = np.zeros((positions,) + a.shape, dtype=np.int64)
    for position in range(FINAL_ADDER_LOW, FINAL_ADDER_HIGH + 1):
        index = (((even >> position) & 1) << 2) | (((odd >> position) & 1) << 1) | carry
        if _line_for_position(cfg.error_mask, position):
            s = exact_sum[index]
            carry = exact_cout[index]
        else:
            s = approx_sum[index]
            errors[position - FINAL_ADDER_LOW] = s - exact_sum[index]
            carry = approx_cout[index]
        product |= s << position
    product = product & ~((1 << cfg.truncation) - 1) & 0xFFFF
    return product, errors


def approx_mul8_array(
    a: np.ndarray,
    b: np.ndarray,
    cfg: MulConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> np.ndarray:
    """Vectorised `approx_mul8` over numpy operand arrays."""

    product, _ = _final_stage_array(a, b, cfg, table)
    return product


def final_adder_errors(
    a: np.ndarray,
    b: np.ndarray,
    cfg: MulConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Tuple[np.ndarray, np.ndarray]:
    """Product plus per-position sum-bit errors e_k (row k = product bit 4 + k)."""

    return _final_stage_array(a, b, cfg, table)


def max_error_bound(error_mask: int) -> int:
    """Analytic worst-case |approx - exact| of one 8x8 block for `error_mask`."""

    return sum(
        1 << (FINAL_ADDER_LOW + k)
        for k in range(MUL_CONTROLLED_POSITIONS)
        if not (error_mask >> k) & 1
    )


@lru_cache(maxsize=256)
def mul8_table(
    error_mask: int = MUL_MASK_ACCURATE,
    truncation: int = 0,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Sequence[int]:
    """Cached 65,536-entry product table indexed by ``(a << 8) | b``."""

    a, b = operand_grid()
    cfg = MulConfig(error_mask=error_mask, truncation=truncation)
    return tuple(approx_mul8_array(a, b, cfg, table=table).tolist())


def _mul16_wide(a: int, b: int, cfg: MulConfig, table: FullAdderTable) -> int:
    products = mul8_table(cfg.error_mask, cfg.truncation, table)
    a_hi, a_lo = (a >> 8) & 0xFF, a & 0xFF
    b_hi, b_lo = (b >> 8) & 0xFF, b & 0xFF
    return (
        (products[(a_hi << 8) | b_hi] << 16)
        + ((products[(a_hi << 8) | b_lo] + products[(a_lo << 8) | b_hi]) << 8)
        + products[(a_lo << 8) | b_lo]
    )


def mul16(a: int, b: int, cfg: MulConfig, *, table: FullAdderTable = DEFAULT_APPROX_FA) -> int:
    """16x16 product from four 8x8 blocks with exact recombination."""

    return _mul16_wide(a & 0xFFFF, b & 0xFFFF, cfg, table) & MASK32


def mul32(a: int, b: int, cfg: MulConfig, *, table: FullAdderTable = DEFAULT_APPROX_FA) -> int:
    """32x32 product from four 16x16 blocks with exact recombination."""

    a &= MASK32
    b &= MASK32
    a_hi, a_lo = a >> 16, a & 0xFFFF
    b_hi, b_lo = b >> 16, b & 0xFFFF
    wide = (
        (_mul16_wide(a_hi, b_hi, cfg, table) << 32)
        + ((_mul16_wide(a_hi, b_lo, cfg, table) + _mul16_wide(a_lo, b_hi, cfg, table)) << 16)
        + _mul16_wide(a_lo, b_lo, cfg, table)
    )
    return wide & MASK64


def to_signed32(value: int) -> int:
    value &= MASK32
    return value - (1 << 32) if value & 0x80000000 else value


def mul32_signed(
    a: int,
    b: int,
    high: bool,
    cfg: MulConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> int:
    """Signed mul/mulh through a sign-magnitude wrapper around the unsigned array."""

    sa = to_signed32(a)
    sb = to_signed32(b)
    magnitude = mul32(abs(sa), abs(sb), cfg, table=table)
    product = (-magnitude) & MASK64 if (sa < 0) != (sb < 0) else magnitude
    return (product >> 32) & MASK32 if high else product & MASK32


DIV_OPS = ("div", "divu", "rem", "remu")


def exact_div(a: int, b: int, op: str) -> int:
    """RISC-V M-extension division, remainder and their corner cases."""

    if op not in DIV_OPS:
        raise ValueError(f"Unknown division op {op!r}; expected one of {DIV_OPS}")
    a &= MASK32
    b &= MASK32
    if op == "divu":
        return MASK32 if b == 0 else a // b
    if op == "remu":
        return a if b == 0 else a % b

    sa = to_signed32(a)
    sb = to_signed32(b)
    if sb == 0:
        return MASK32 if op == "div" else a
    if sa == -(1 << 31) and sb == -1:
        return a if op == "div" else 0
    quotient = abs(sa) // abs(sb)
    if (sa < 0) != (sb < 0):
        quotient = -quotient
    if op == "div":
        return quotient & MASK32
    return (sa - quotient * sb) & MASK32
