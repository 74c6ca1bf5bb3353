from __future__ import annotations

import logging
from typing import Dict, List

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from .energy import shipped_cost_models
from .error_analysis import error_stats_8x8, sweep_configs, sweep_summary
from .harness import ACCURATE_MODEL, APPROX_MODEL, DEFAULT_APPROX_MULCSR, all_kernels, compare_kernels, run_request
from .kernels import default_spec
from .models import MulConfig, RunRequest

logger = logging.getLogger(__name__)


class RunPayload(BaseModel):
    kernel: str
    seed: int = 0
    params: Dict[str, int] = Field(default_factory=dict)
    alucsr: int = Field(default=0, ge=0, le=0xFFFFFFFF)
    mulcsr: int = Field(default=0, ge=0, le=0xFFFFFFFF)
    divcsr: int = Field(default=0, ge=0, le=0xFFFFFFFF)
    cost_model: str | None = None
    max_cycles: int | None = Field(default=None, ge=1)


class ComparePayload(BaseModel):
    kernels: List[str] = Field(default_factory=all_kernels)
    seed: int = 0
    mulcsr: int = Field(default=DEFAULT_APPROX_MULCSR, ge=0, le=0xFFFFFFFF)
    accurate_model: str = ACCURATE_MODEL
    approx_model: str = APPROX_MODEL


def create_app() -> FastAPI:
    app = FastAPI(title="approx-rv")
    sweep_cache: Dict[str, object] = {}

    @app.get("/api/sweep")
    def get_sweep(mask: int | None = Query(None, ge=0, le=0x7F)) -> Dict[str, object]:
        if mask is not None:
            return {"rows": [error_stats_8x8(MulConfig(error_mask=mask)).to_row()]}
        if not sweep_cache:
            rows = sweep_configs()
            sweep_cache["rows"] = [row.to_row() for row in rows]
            sweep_cache["summary"] = sweep_summary(rows)
        return dict(sweep_cache)

    @app.post("/api/run")
    def post_run(payload: RunPayload) -> Dict[str, object]:
        try:
            request = RunRequest(
                kernel=default_spec(payload.kernel, payload.seed, **payload.params),
                alucsr=payload.alucsr,
                mulcsr=payload.mulcsr,
                divcsr=payload.divcsr,
                cost_model=payload.cost_model,
                max_cycles=payload.max_cycles,
            )
            outcome = run_request(request)
        except (KeyError, ValueError, FileNotFoundError) as exc:
            _raise_request_error(exc)
        logger.info(
            "web_run kernel=%s halt=%s instret=%s",
            outcome.name,
            outcome.summary.halt.kind.value,
            outcome.summary.instret,
        )
        return {"status": "ok" if outcome.ok else outcome.summary.halt.kind.value, **outcome.to_dict()}

    @app.post("/api/compare")
    def post_compare(payload: ComparePayload) -> Dict[str, object]:
        try:
            result = compare_kernels(
                payload.kernels,
                payload.accurate_model,
                payload.approx_model,
                mulcsr=payload.mulcsr,
                seed=payload.seed,
            )
        except (KeyError, ValueError, FileNotFoundError) as exc:
            _raise_request_error(exc)
        return {"status": "ok", **result}

    @app.get("/api/cost-models")
    def get_cost_models() -> Dict[str, object]:
        return {"models": shipped_cost_models(), "kernels": all_kernels()}

    return app


def _raise_request_error(exc: Exception) -> None:
    if isinstance(exc, (KeyError, FileNotFoundError)):
        detail = str(exc.args[0]) if exc.args else str(exc)
        raise HTTPException(status_code=404, detail=detail) from exc
    raise HTTPException(status_code=400, detail=str(exc)) from exc
