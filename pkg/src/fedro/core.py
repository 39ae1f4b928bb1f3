"""Robust federated averaging protocol loop.

Each round: sample clients without replacement, run K local SGD steps on
the honest sampled clients, fill the Byzantine slots with crafted updates,
aggregate robustly, and apply the server step. Per-round diagnostics track
the exact global gradient, the sampled Byzantine count, the aggregation
deviation from the honest mean, and the spread of honest local models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .aggregation import Aggregator, AggregatorConfig, make_aggregator
from .attacks import AttackSpec, craft_byzantine_updates
from .rngtools import TAG_GRAD, TAG_OUTPUT, TAG_SAMPLING, child_rng
from .tasks import (
    QuadraticTask,
    TaskConfig,
    TaskConstants,
    global_loss,
    make_quadratic_task,
    stochastic_gradient,
    true_global_gradient,
)

__all__ = [
    "RunConfig",
    "RoundTrace",
    "RunMetrics",
    "ErrorBoundBreakdown",
    "sample_clients",
    "local_sgd",
    "run_round",
    "run_fedro",
    "plan_step_sizes",
    "theoretical_error_bound",
    "trace_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "round",
    "grad_norm_sq",
    "loss",
    "byz_sampled",
    "event_violated",
    "dev_norm_sq",
    "honest_spread",
)

VIOLATION_MODES = ("continue_and_flag", "takeover_zero")


class RunConfig(BaseModel):
    """Full description of one simulated training run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    task: TaskConfig
    n_hat: int
    b_hat: int
    T: int
    K: int = 1
    gamma_c: Optional[float] = None  # None: derive via plan_step_sizes
    gamma_s: float = 1.0
    aggregator: AggregatorConfig = AggregatorConfig()
    attack: AttackSpec = AttackSpec()
    master_seed: int = 0
    x0: Optional[list[float]] = None  # None: zero vector
    violation_mode: str = "continue_and_flag"

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if self.n_hat > self.task.n:
            raise ValueError("n_hat exceeds the total client count n")
        if self.n_hat < 1:
            raise ValueError("n_hat must be >= 1")
        if not (0 <= self.b_hat < self.n_hat / 2):
            raise ValueError("b_hat must satisfy 0 <= b_hat < n_hat/2")
        if self.T < 1 or self.K < 1:
            raise ValueError("T and K must be >= 1")
        if self.gamma_c is not None and self.gamma_c <= 0:
            raise ValueError("gamma_c must be positive")
        if self.gamma_s <= 0:
            raise ValueError("gamma_s must be positive")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        if self.violation_mode not in VIOLATION_MODES:
            raise ValueError(f"unknown violation_mode {self.violation_mode!r}")
        if self.x0 is not None and len(self.x0) != self.task.d:
            raise ValueError("x0 length must equal the task dimension d")
        return self


@dataclass(frozen=True)
class RoundTrace:
    round: int
    grad_norm_sq: float
    loss: float
    byz_sampled: int
    event_violated: bool
    dev_norm_sq: float
    honest_spread: float


@dataclass(frozen=True)
class RunMetrics:
    traces: list[RoundTrace]
    avg_grad_norm_sq: float
    avg_grad_norm_sq_conditional: float  # violated rounds excluded; NaN if none left
    output_model: np.ndarray  # uniform draw from the visited iterates
    final_model: np.ndarray
    event_held: bool
    gamma_c: float
    gamma_s: float


@dataclass(frozen=True)
class ErrorBoundBreakdown:
    init_term: float
    sampling_term: float
    drift_noise_term: float
    drift_hetero_term: float
    byzantine_term: float

    @property
    def total(self) -> float:
        return (
            self.init_term
            + self.sampling_term
            + self.drift_noise_term
            + self.drift_hetero_term
            + self.byzantine_term
        )


def sample_clients(n: int, n_hat: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement subset of client ids, sorted ascending."""
    if not (1 <= n_hat <= n):
        raise ValueError("need 1 <= n_hat <= n")
    return np.sort(rng.choice(n, size=n_hat, replace=False))


def local_sgd(
    task: QuadraticTask,
    client_id: int,
    x_t: np.ndarray,
    K: int,
    gamma_c: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """K local SGD steps from x_t; returns (model difference, final model)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    x = x_t.copy()
    for _ in range(K):
        x = x - gamma_c * stochastic_gradient(task, client_id, x, rng)
    return x - x_t, x


def _batch_local_updates(
    task: QuadraticTask,
    client_ids: np.ndarray,
    x_t: np.ndarray,
    K: int,
    gamma_c: float,
    master_seed: int,
    round_index: int,
) -> np.ndarray:
    """Vectorized local SGD over many clients; bitwise identical to calling
    local_sgd per client with the per-(round, client) streams."""
    m = len(client_ids)
    d = task.d
    centers = task.centers[client_ids]
    if task.noise_sigma > 0:
        noise = np.empty((m, K, d))
        per_coord = task.noise_sigma / np.sqrt(d)
        for row, cid in enumerate(client_ids):
            rng = child_rng(master_seed, TAG_GRAD, round_index, int(cid))
            noise[row] = rng.normal(0.0, per_coord, size=(K, d))
    else:
        noise = None
    X = np.tile(x_t, (m, 1))
    for k in range(K):
        G = task.L * (X - centers)
        if noise is not None:
            G = G + noise[:, k, :]
        X = X - gamma_c * G
    return X - x_t


def run_round(
    x_t: np.ndarray,
    task: QuadraticTask,
    config: RunConfig,
    round_index: int,
    aggregator: Aggregator,
    gamma_c: float,
) -> tuple[np.ndarray, RoundTrace]:
    """One protocol round; returns the next model and its diagnostics."""
    seed = config.master_seed
    rng_sample = child_rng(seed, TAG_SAMPLING, round_index)
    selected = sample_clients(task.n, config.n_hat, rng_sample)
    byz_mask = selected < task.byz_count
    byz_ids = selected[byz_mask]
    honest_ids = selected[~byz_mask]
    violated = len(byz_ids) > config.b_hat

    d = task.d
    if len(honest_ids) > 0:
        honest_updates = _batch_local_updates(
            task, honest_ids, x_t, config.K, gamma_c, seed, round_index
        )
        honest_mean = honest_updates[0] + (honest_updates - honest_updates[0]).mean(axis=0)
        spread_models = x_t + honest_updates
        center = spread_models[0] + (spread_models - spread_models[0]).mean(axis=0)
        honest_spread = float(((spread_models - center) ** 2).sum(axis=1).mean())
    else:
        honest_updates = np.empty((0, d))
        honest_mean = np.zeros(d)
        honest_spread = 0.0

    if len(byz_ids) > 0:
        if len(honest_ids) > 0:
            byz_updates = craft_byzantine_updates(
                honest_updates, len(byz_ids), config.attack, round_index
            )
        else:
            byz_updates = np.zeros((len(byz_ids), d))
    else:
        byz_updates = np.empty((0, d))

    updates = np.empty((config.n_hat, d))
    updates[byz_mask] = byz_updates
    updates[~byz_mask] = honest_updates

    agg = aggregator(updates)
    dev = agg - honest_mean
    dev_norm_sq = float((dev**2).sum())

    x_next = x_t + config.gamma_s * agg
    if violated and config.violation_mode == "takeover_zero":
        x_next = np.zeros(d)

    grad = true_global_gradient(task, x_t)
    trace = RoundTrace(
        round=round_index,
        grad_norm_sq=float((grad**2).sum()),
        loss=global_loss(task, x_t),
        byz_sampled=int(len(byz_ids)),
        event_violated=bool(violated),
        dev_norm_sq=dev_norm_sq,
        honest_spread=honest_spread,
    )
    return x_next, trace


def build_task(config: RunConfig) -> tuple[QuadraticTask, TaskConstants]:
    if config.task.kind != "quadratic":
        raise NotImplementedError(
            "only the quadratic task kind is implemented; "
            f"got {config.task.kind!r}"
        )
    x0 = None if config.x0 is None else np.asarray(config.x0, dtype=float)
    return make_quadratic_task(config.task, config.master_seed, x0=x0)


def resolve_step_sizes(config: RunConfig, constants: TaskConstants) -> tuple[float, float]:
    if config.gamma_c is not None:
        return config.gamma_s, config.gamma_c
    gamma_s, gamma_c = plan_step_sizes(
        constants,
        K=config.K,
        T=config.T,
        n_hat=config.n_hat,
        b_hat=config.b_hat,
        n=config.task.n,
        b=config.task.b,
    )
    return config.gamma_s if config.gamma_s != 1.0 else gamma_s, gamma_c


def run_fedro(config: RunConfig) -> RunMetrics:
    """Run the full protocol; deterministic given the master seed."""
    task, constants = build_task(config)
    gamma_s, gamma_c = resolve_step_sizes(config, constants)
    aggregator = make_aggregator(config.aggregator, config.b_hat)

    x = np.zeros(task.d) if config.x0 is None else np.asarray(config.x0, dtype=float)
    traces: list[RoundTrace] = []
    for t in range(config.T):
        x, trace = run_round(x, task, config, t, aggregator, gamma_c)
        traces.append(trace)

    grad_sqs = np.array([tr.grad_norm_sq for tr in traces])
    ok_mask = np.array([not tr.event_violated for tr in traces])
    avg = float(grad_sqs.mean())
    avg_cond = float(grad_sqs[ok_mask].mean()) if ok_mask.any() else math.nan

    # Output model: uniform draw from the T visited iterates x_0..x_{T-1}.
    out_index = int(child_rng(config.master_seed, TAG_OUTPUT).integers(config.T))
    replay = np.zeros(task.d) if config.x0 is None else np.asarray(config.x0, dtype=float)
    for t in range(out_index):
        replay, _ = run_round(replay, task, config, t, aggregator, gamma_c)

    return RunMetrics(
        traces=traces,
        avg_grad_norm_sq=avg,
        avg_grad_norm_sq_conditional=avg_cond,
        output_model=replay,
        final_model=x,
        event_held=bool(ok_mask.all()),
        gamma_c=gamma_c,
        gamma_s=gamma_s,
    )


def plan_step_sizes(
    constants: TaskConstants,
    K: int,
    T: int,
    n_hat: int,
    b_hat: int,
    n: int,
    b: int,
) -> tuple[float, float]:
    """Step sizes for the convergence guarantee: server step 1, client step
    the minimum of the three analytic candidates. Candidates with a zero
    denominator (K = 1, or no noise and no heterogeneity) drop out."""
    L, sigma, zeta, delta0 = constants.L, constants.sigma, constants.zeta, constants.delta0
    if L <= 0:
        raise ValueError("L must be positive")
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    base = 1.0 / (36.0 * L * K)
    if delta0 == 0:
        return 1.0, base
    mix = sigma**2 / K + 6.0 * (1.0 - (n_hat - b_hat) / (n - b)) * zeta**2
    t2 = math.inf
    if mix > 0:
        t2 = (1.0 / (2.0 * K)) * math.sqrt(n_hat * delta0 / (L * T * mix))
    t3 = math.inf
    noise = sigma**2 + 4.0 * K * zeta**2
    if K > 1 and noise > 0:
        t3 = (3.0 * delta0 / (2.0 * K * (K - 1) * T * L**2 * noise)) ** (1.0 / 3.0)
    return 1.0, min(base, t2, t3)


def theoretical_error_bound(
    constants: TaskConstants,
    K: int,
    T: int,
    n_hat: int,
    b_hat: int,
    n: int,
    b: int,
    kappa: float,
    gamma_c: float,
    gamma_s: float,
) -> ErrorBoundBreakdown:
    """Per-term breakdown of the high-probability bound on the average
    squared gradient norm. Raises if the step sizes violate the bound's
    preconditions."""
    L, sigma, zeta, delta0 = constants.L, constants.sigma, constants.zeta, constants.delta0
    tol = 1e-12
    if gamma_c > 1.0 / (16.0 * L * K) + tol:
        raise ValueError("step-size precondition gamma_c <= 1/(16 L K) violated")
    if gamma_c * gamma_s > 1.0 / (36.0 * L * K) + tol:
        raise ValueError("step-size precondition gamma_c*gamma_s <= 1/(36 L K) violated")
    r = 1.0 - (n_hat - b_hat) / (n - b)
    return ErrorBoundBreakdown(
        init_term=5.0 * delta0 / (T * K * gamma_c * gamma_s),
        sampling_term=(20.0 * L * K * gamma_c * gamma_s / n_hat)
        * (sigma**2 / K + 6.0 * r * zeta**2),
        drift_noise_term=(10.0 / 3.0) * gamma_c**2 * L**2 * (K - 1) * sigma**2,
        drift_hetero_term=(40.0 / 3.0) * gamma_c**2 * L**2 * K * (K - 1) * zeta**2,
        byzantine_term=165.0 * kappa * (sigma**2 / K + 6.0 * zeta**2),
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def trace_csv(traces: list[RoundTrace]) -> str:
    """Stable CSV rendering of per-round diagnostics (booleans as 0/1,
    floats as shortest round-trip decimal)."""
    lines = [",".join(CSV_COLUMNS)]
    for tr in traces:
        lines.append(
            ",".join(
                (
                    str(tr.round),
                    _fmt(tr.grad_norm_sq),
                    _fmt(tr.loss),
                    str(tr.byz_sampled),
                    str(int(tr.event_violated)),
                    _fmt(tr.dev_norm_sq),
                    _fmt(tr.honest_spread),
                )
            )
        )
    return "\n".join(lines) + "\n"
