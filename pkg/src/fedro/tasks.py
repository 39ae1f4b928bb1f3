"""Synthetic learning tasks with analytically known constants.

The workhorse is the per-client quadratic loss f_i(x) = (L/2)||x - c_i||^2,
for which smoothness, noise and heterogeneity constants, the minimizer and
the initial suboptimality gap are all exact closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .rngtools import TAG_TASK, child_rng

__all__ = [
    "TaskConfig",
    "QuadraticTask",
    "TaskConstants",
    "AssumptionReport",
    "make_quadratic_task",
    "stochastic_gradient",
    "true_global_gradient",
    "global_loss",
    "verify_assumptions",
]


class TaskConfig(BaseModel):
    """Declarative task description carried in run configs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str = "quadratic"
    n: int
    b: int
    d: int = 1
    L: float = 1.0
    spread: float = 0.0
    sigma: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "TaskConfig":
        if self.kind not in ("quadratic", "logistic"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not (0 <= self.b < self.n / 2):
            raise ValueError("b must satisfy 0 <= b < n/2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.spread < 0 or self.sigma < 0:
            raise ValueError("spread and sigma must be nonnegative")
        return self


@dataclass(frozen=True)
class TaskConstants:
    """Exact constants for a quadratic task: smoothness L, gradient-noise
    bound sigma, heterogeneity bound zeta, initial gap delta0 at x0, global
    minimizer, and honest client count."""

    L: float
    sigma: float
    zeta: float
    delta0: float
    x_star: np.ndarray
    h: int


@dataclass(frozen=True)
class QuadraticTask:
    L: float
    centers: np.ndarray  # (n, d) per-client loss centers
    byz_count: int  # clients 0..byz_count-1 are Byzantine
    noise_sigma: float

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def honest_ids(self) -> np.ndarray:
        return np.arange(self.byz_count, self.n)

    def is_byzantine(self, client_id: int) -> bool:
        return client_id < self.byz_count

    @property
    def honest_center(self) -> np.ndarray:
        return self.centers[self.byz_count :].mean(axis=0)


@dataclass(frozen=True)
class AssumptionReport:
    L_hat: float
    sigma2_hat: float
    zeta2_hat: float
    zeta_is_estimate: bool


def make_quadratic_task(
    config: TaskConfig, seed: int, x0: np.ndarray | None = None
) -> tuple[QuadraticTask, TaskConstants]:
    """Draw client centers and compute the task constants in closed form.

    Honest centers are drawn from the task stream of `seed` and re-centered
    so the global minimizer is exactly the origin of the draw's mean.
    Byzantine slots occupy the lowest client indices; their centers are
    never used.
    """
    rng = child_rng(seed, TAG_TASK)
    n, b, d = config.n, config.b, config.d
    centers = rng.normal(0.0, config.spread, size=(n, d)) if config.spread > 0 else np.zeros((n, d))
    if config.spread > 0:
        centers[b:] -= centers[b:].mean(axis=0)
    task = QuadraticTask(
        L=config.L, centers=centers, byz_count=b, noise_sigma=config.sigma
    )
    h = n - b
    honest = centers[b:]
    c_bar = honest.mean(axis=0)
    zeta_sq = config.L**2 * float(((honest - c_bar) ** 2).sum()) / h
    if x0 is None:
        x0 = np.zeros(d)
    delta0 = 0.5 * config.L * float(((x0 - c_bar) ** 2).sum())
    constants = TaskConstants(
        L=config.L,
        sigma=config.sigma,
        zeta=float(np.sqrt(zeta_sq)),
        delta0=delta0,
        x_star=c_bar,
        h=h,
    )
    return task, constants


def stochastic_gradient(
    task: QuadraticTask, client_id: int, x: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Unbiased gradient L(x - c_i) plus isotropic Gaussian noise with
    total variance sigma^2."""
    if task.is_byzantine(client_id):
        raise ValueError("stochastic gradients are only defined for honest clients")
    g = task.L * (x - task.centers[client_id])
    if task.noise_sigma > 0:
        g = g + rng.normal(0.0, task.noise_sigma / np.sqrt(task.d), size=task.d)
    return g


def true_global_gradient(task: QuadraticTask, x: np.ndarray) -> np.ndarray:
    """Exact gradient of the honest-average loss: L(x - mean honest center)."""
    return task.L * (x - task.honest_center)


def global_loss(task: QuadraticTask, x: np.ndarray) -> float:
    """Honest-average loss value at x."""
    honest = task.centers[task.byz_count :]
    return 0.5 * task.L * float(((x - honest) ** 2).sum(axis=1).mean())


def verify_assumptions(
    task: QuadraticTask,
    sample_count: int = 10_000,
    grid_size: int = 10,
    seed: int = 0,
) -> AssumptionReport:
    """Empirically re-estimate the task constants.

    Smoothness is measured as the worst gradient Lipschitz ratio over random
    point pairs (exact for quadratics), noise as the second moment of the
    gradient noise at a fixed point, heterogeneity as the honest gradient
    dispersion maximized over grid points.
    """
    rng = child_rng(seed, 0xC4EC)
    d = task.d
    xs = rng.normal(0.0, 2.0, size=(grid_size, d))
    ys = rng.normal(0.0, 2.0, size=(grid_size, d))

    l_hat = 0.0
    for x, y in zip(xs, ys):
        gx = true_global_gradient(task, x)
        gy = true_global_gradient(task, y)
        denom = float(np.linalg.norm(x - y))
        if denom > 0:
            l_hat = max(l_hat, float(np.linalg.norm(gx - gy)) / denom)

    sigma2_hat = 0.0
    if task.noise_sigma > 0:
        cid = int(task.honest_ids[0])
        x = xs[0]
        mean_grad = task.L * (x - task.centers[cid])
        noise_sq = np.empty(sample_count)
        for i in range(sample_count):
            g = stochastic_gradient(task, cid, x, rng)
            noise_sq[i] = float(((g - mean_grad) ** 2).sum())
        sigma2_hat = float(noise_sq.mean())

    zeta2_hat = 0.0
    honest = task.centers[task.byz_count :]
    for x in xs:
        grads = task.L * (x - honest)
        g_bar = true_global_gradient(task, x)
        zeta2_hat = max(zeta2_hat, float(((grads - g_bar) ** 2).sum(axis=1).mean()))

    return AssumptionReport(
        L_hat=l_hat,
        sigma2_hat=sigma2_hat,
        zeta2_hat=zeta2_hat,
        zeta_is_estimate=False,
    )
