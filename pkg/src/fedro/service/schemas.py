"""Request/response models for the HTTP service.

The run request embeds the full RunConfig; planner and check requests carry
their flat parameter sets. All models reject unknown fields so typos in
sweep scripts fail loudly.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

from ..core import RunConfig

__all__ = [
    "PlanRequest",
    "PlanResponse",
    "RunRequest",
    "RunResponse",
    "PresetRequest",
    "PresetResponse",
    "CheckRequest",
    "CheckResponse",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PlanRequest(_Strict):
    n: int
    b: int
    T: int
    p: float
    n_hat: Optional[int] = None


class PlanResponse(_Strict):
    n_th: int
    n_opt: int
    impossibility: Optional[float]  # None when p < 1/2
    n_hat: Optional[int] = None
    b_star: Optional[int] = None
    condition: Optional[str] = None
    feasible: bool


RunRequest = RunConfig


class RunResponse(_Strict):
    avg_grad_norm_sq: float
    avg_grad_norm_sq_conditional: Optional[float]  # None if every round violated
    final_grad_norm_sq: float
    final_loss: float
    event_held: bool
    violated_rounds: int
    gamma_c: float
    gamma_s: float
    output_model: list[float]
    final_model: list[float]
    trace_csv: str


class PresetRequest(_Strict):
    name: str
    master_seed: int = 0
    workers: Optional[int] = None


class PresetResponse(_Strict):
    name: str
    aggregate_csv: str
    cell_csvs: dict[str, str]


class CheckRequest(_Strict):
    suite: str
    rule: str = "average"
    b_hat: int = 0
    nnm: bool = False


class CheckResponse(_Strict):
    suite: str
    passed: bool
    margins: dict[str, float]
    details: str
