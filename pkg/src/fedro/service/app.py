"""HTTP service exposing the planner, simulator, presets and check suites.

The CLI talks to this app in-process by default; the same app can be served
over the network for remote use. All numerical work happens in the core
package; this layer only validates, dispatches and serializes.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException

from ..checks import run_suite
from ..core import build_task, run_fedro, trace_csv
from ..planner import (
    ConditionStatus,
    SamplingSpec,
    check_sampling_condition,
    impossibility_bound,
    min_tolerable_byz,
    optimal_threshold,
    sampling_threshold,
)
from ..presets import run_preset
from ..tasks import global_loss, true_global_gradient
from .schemas import (
    CheckRequest,
    CheckResponse,
    PlanRequest,
    PlanResponse,
    PresetRequest,
    PresetResponse,
    RunRequest,
    RunResponse,
)

__all__ = ["create_app", "app"]


def create_app() -> FastAPI:
    app = FastAPI(title="fedro", version="0.1.0")

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/plan", response_model=PlanResponse)
    def plan(req: PlanRequest) -> PlanResponse:
        try:
            spec = SamplingSpec(n=req.n, b=req.b, T=req.T, p=req.p)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        n_th = sampling_threshold(spec)
        n_opt = optimal_threshold(spec)
        imp = impossibility_bound(spec) if spec.p >= 0.5 else None
        b_star = None
        condition = None
        feasible = True
        if req.n_hat is not None:
            try:
                b_star = min_tolerable_byz(spec, req.n_hat)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            feasible = b_star is not None
            if feasible:
                condition = check_sampling_condition(spec, req.n_hat, b_star).value
            else:
                condition = ConditionStatus.INFEASIBLE_RATIO.value
        return PlanResponse(
            n_th=n_th,
            n_opt=n_opt,
            impossibility=imp,
            n_hat=req.n_hat,
            b_star=b_star,
            condition=condition,
            feasible=feasible,
        )

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest) -> RunResponse:
        try:
            metrics = run_fedro(req)
            task, _ = build_task(req)
        except (ValueError, NotImplementedError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        grad = true_global_gradient(task, metrics.final_model)
        cond = metrics.avg_grad_norm_sq_conditional
        return RunResponse(
            avg_grad_norm_sq=metrics.avg_grad_norm_sq,
            avg_grad_norm_sq_conditional=None if math.isnan(cond) else cond,
            final_grad_norm_sq=float((grad**2).sum()),
            final_loss=global_loss(task, metrics.final_model),
            event_held=metrics.event_held,
            violated_rounds=sum(tr.event_violated for tr in metrics.traces),
            gamma_c=metrics.gamma_c,
            gamma_s=metrics.gamma_s,
            output_model=[float(v) for v in metrics.output_model],
            final_model=[float(v) for v in metrics.final_model],
            trace_csv=trace_csv(metrics.traces),
        )

    @app.post("/preset", response_model=PresetResponse)
    def preset(req: PresetRequest) -> PresetResponse:
        try:
            result = run_preset(req.name, master_seed=req.master_seed, workers=req.workers)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return PresetResponse(
            name=result.name,
            aggregate_csv=result.aggregate_csv,
            cell_csvs=result.cell_csvs,
        )

    @app.post("/check", response_model=CheckResponse)
    def check(req: CheckRequest) -> CheckResponse:
        try:
            report = run_suite(req.suite, rule=req.rule, b_hat=req.b_hat, nnm=req.nnm)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        margins = {
            k: (v if math.isfinite(v) else math.copysign(1e308, v))
            for k, v in report.margins.items()
        }
        return CheckResponse(
            suite=report.suite, passed=report.passed, margins=margins, details=report.details
        )

    return app


app = create_app()
