from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import numpy as np

from .circuits import (
    DEFAULT_APPROX_FA,
    FullAdderTable,
    approx_mul8_array,
    operand_grid,
    to_signed32,
)
from .models import MUL_MASK_ACCURATE, MulConfig

logger = logging.getLogger(__name__)

# Reference figures for the 8x8 approximate multiplier.
POWER_MIN_UW = 70.2
POWER_MAX_UW = 101.3
MULTIPLIER_COST = {
    "area_um2": 269.6,
    "delay_ns": 0.64,
    "power_min_uw": POWER_MIN_UW,
    "power_max_uw": POWER_MAX_UW,
}
REFERENCE_ER_RANGE = (0.3616, 0.6506)
REFERENCE_MRED_RANGE = (0.0085, 0.0894)
REFERENCE_DEFAULT_POINT = {"mask": 0x7E, "er": 0.362, "mred": 0.0085}

SWEEP_COLUMNS = ["mask_hex", "er", "mred", "mean_ed", "max_ed", "power_uW"]


@dataclass(frozen=True)
class ErrorStats:
    config: int
    er: float
    mred: float
    mean_ed: float
    max_ed: int
    power_estimate_uW: float

    def to_row(self) -> Dict[str, object]:
        return {
            "mask_hex": f"0x{self.config:02X}",
            "er": f"{self.er:.6f}",
            "mred": f"{self.mred:.6f}",
            "mean_ed": f"{self.mean_ed:.6f}",
            "max_ed": self.max_ed,
            "power_uW": f"{self.power_estimate_uW:.4f}",
        }

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def power_estimate(
    cfg: MulConfig,
    low_uw: float = POWER_MIN_UW,
    high_uw: float = POWER_MAX_UW,
) -> float:
    """Interpolate multiplier power on the number of accurate error lines."""

    accurate_lines = bin(cfg.error_mask & MUL_MASK_ACCURATE).count("1")
    return low_uw + (high_uw - low_uw) * accurate_lines / 7


def error_stats_8x8(cfg: MulConfig, *, table: FullAdderTable = DEFAULT_APPROX_FA) -> ErrorStats:
    """Exhaustive ER / MRED / error-distance statistics over all 65,536 pairs."""

    if cfg.truncation != 0:
        raise ValueError("error sweeps characterise error masks only; truncation must be 0")
    a, b = operand_grid()
    exact = a * b
    approx = approx_mul8_array(a, b, cfg, table=table)
    distance = np.abs(approx - exact)
    nonzero = exact != 0
    mred = float(np.mean(distance[nonzero] / exact[nonzero]))
    return ErrorStats(
        config=cfg.error_mask,
        er=float(np.count_nonzero(distance) / distance.size),
        mred=mred,
        mean_ed=float(np.mean(distance)),
        max_ed=int(distance.max()),
        power_estimate_uW=power_estimate(cfg),
    )


def sweep_configs(
    workers: int | None = None,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> List[ErrorStats]:
    """One ErrorStats row per error mask 0x00..0x7F, in mask order."""

    masks = range(MUL_MASK_ACCURATE + 1)

    def _row(mask: int) -> ErrorStats:
        return error_stats_8x8(MulConfig(error_mask=mask), table=table)

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row, masks))
    else:
        rows = [_row(mask) for mask in masks]
    logger.info("error_sweep_finished rows=%s workers=%s", len(rows), workers or 1)
    return rows


def sweep_summary(rows: Sequence[ErrorStats]) -> Dict[str, object]:
    """Ranges over the non-trivial masks next to the reference multiplier figures."""

    approximate = [row for row in rows if row.config != MUL_MASK_ACCURATE]
    if not approximate:
        raise ValueError("sweep_summary needs at least one approximate configuration")
    by_mask = {row.config: row for row in rows}
    default_row = by_mask.get(REFERENCE_DEFAULT_POINT["mask"])
    return {
        "rows": len(rows),
        "multiplier_cost": dict(MULTIPLIER_COST),
        "er_range": [min(r.er for r in approximate), max(r.er for r in approximate)],
        "mred_range": [min(r.mred for r in approximate), max(r.mred for r in approximate)],
        "reference_er_range": list(REFERENCE_ER_RANGE),
        "reference_mred_range": list(REFERENCE_MRED_RANGE),
        "default_mask": {
            "mask_hex": f"0x{REFERENCE_DEFAULT_POINT['mask']:02X}",
            "er": default_row.er if default_row else None,
            "mred": default_row.mred if default_row else None,
            "reference_er": REFERENCE_DEFAULT_POINT["er"],
            "reference_mred": REFERENCE_DEFAULT_POINT["mred"],
        },
    }


def app_output_error(reference: Sequence[int], candidate: Sequence[int]) -> Dict[str, float]:
    """Element-wise ER / MRED / max error distance between two output streams.

    Words are compared as signed 32-bit values; MRED skips zero references.
    """

    if len(reference) != len(candidate):
        raise ValueError(
            f"output lengths differ: reference={len(reference)} candidate={len(candidate)}"
        )
    if not reference:
        return {"er": 0.0, "mred": 0.0, "max_ed": 0}
    ref = np.array([to_signed32(value) for value in reference], dtype=np.int64)
    cand = np.array([to_signed32(value) for value in candidate], dtype=np.int64)
    distance = np.abs(cand - ref)
    nonzero = ref != 0
    mred = float(np.mean(distance[nonzero] / np.abs(ref[nonzero]))) if nonzero.any() else 0.0
    return {
        "er": float(np.count_nonzero(distance) / distance.size),
        "mred": mred,
        "max_ed": int(distance.max()),
    }


def matmul_error_bound(
    reference: Sequence[int],
    n: int,
    cfg: MulConfig,
    *,
    table: FullAdderTable = DEFAULT_APPROX_FA,
) -> Dict[str, float]:
    """Worst-case error of an n-term dot product of 8-bit operands per output.

    The per-product bound comes from the exhaustive 8x8 error table of `cfg`.
    """

    untruncated = MulConfig(error_mask=cfg.error_mask)
    per_product = error_stats_8x8(untruncated, table=table).max_ed
    if cfg.truncation:
        # Zeroed low bits can drop up to 2**t - 1 more.
        per_product += (1 << min(cfg.truncation, 16)) - 1
    per_output = n * per_product
    ref = np.array([abs(to_signed32(value)) for value in reference], dtype=np.float64)
    nonzero = ref != 0
    mred_bound = float(np.mean(per_output / ref[nonzero])) if nonzero.any() else 0.0
    return {"per_product": per_product, "per_output": per_output, "mred_bound": mred_bound}
