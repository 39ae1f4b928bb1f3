"""Robust aggregation rules and an empirical robustness certifier.

All rules map a stack of n_hat update vectors (rows) to a single vector.
Averages are computed in shifted form (first row subtracted) so that a set
of bitwise-identical inputs aggregates to exactly that input.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

__all__ = [
    "AggregatorConfig",
    "KappaReport",
    "average",
    "cw_trimmed_mean",
    "cw_median",
    "geometric_median",
    "nnm_transform",
    "make_aggregator",
    "kappa_empirical",
    "certify_robustness",
]

Aggregator = Callable[[np.ndarray], np.ndarray]

RULES = ("average", "cw_trimmed_mean", "cw_median", "geometric_median")


class AggregatorConfig(BaseModel):
    """Selects an aggregation rule, optionally behind nearest-neighbor
    mixing, plus iteration controls for the geometric median."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    rule: str = "cw_trimmed_mean"
    nnm: bool = False
    tol: float = 1e-8
    max_iter: int = 200

    def _check_rule(self) -> None:
        if self.rule not in RULES:
            raise ValueError(f"unknown aggregation rule {self.rule!r}")


@dataclass(frozen=True)
class KappaReport:
    """Worst observed robustness ratio over all honest-subset candidates."""

    kappa_hat: float
    witness_subset: tuple[int, ...]
    instances_tested: int


def _as_matrix(inputs: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    w = np.asarray(inputs, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if w.ndim != 2 or w.shape[0] == 0:
        raise ValueError("inputs must be a non-empty stack of equal-length vectors")
    return w


def _shifted_mean(w: np.ndarray) -> np.ndarray:
    # Exact when all rows are bitwise equal.
    return w[0] + (w - w[0]).mean(axis=0)


def average(inputs: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Coordinate-wise arithmetic mean."""
    return _shifted_mean(_as_matrix(inputs))


def cw_trimmed_mean(inputs: Sequence[np.ndarray] | np.ndarray, b_hat: int) -> np.ndarray:
    """Per coordinate, drop the b_hat largest and b_hat smallest values and
    average the rest."""
    w = _as_matrix(inputs)
    n = w.shape[0]
    if b_hat < 0:
        raise ValueError("b_hat must be >= 0")
    if n <= 2 * b_hat:
        raise ValueError(f"need more than 2*b_hat={2 * b_hat} inputs, got {n}")
    kept = np.sort(w, axis=0)[b_hat : n - b_hat]
    return kept[0] + (kept - kept[0]).mean(axis=0)


def cw_median(inputs: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Per-coordinate median; even counts take the midpoint of the two
    central order statistics."""
    return np.median(_as_matrix(inputs), axis=0)


def geometric_median(
    inputs: Sequence[np.ndarray] | np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> np.ndarray:
    """Weiszfeld iteration for the minimizer of the sum of Euclidean
    distances to the inputs.

    When an iterate lands on an input point, the point is returned if it
    passes the first-order optimality check (the pull of the remaining
    points does not exceed the point's multiplicity); otherwise the iterate
    is nudged by tol and iteration continues.
    """
    w = _as_matrix(inputs)
    y = _shifted_mean(w)
    scale = max(1.0, float(np.max(np.linalg.norm(w - y, axis=1), initial=0.0)))
    for _ in range(max_iter):
        dists = np.linalg.norm(w - y, axis=1)
        coincident = dists < tol * scale
        if coincident.any():
            far = ~coincident
            if not far.any():
                return w[coincident][0]
            units = (w[far] - y) / dists[far, None]
            pull = np.linalg.norm(units.sum(axis=0))
            if pull <= coincident.sum():
                return w[coincident][0]
            y = y + tol * scale * units.sum(axis=0) / pull
            continue
        inv = 1.0 / dists
        y_next = (w * inv[:, None]).sum(axis=0) / inv.sum()
        step = np.linalg.norm(y_next - y)
        y = y_next
        if step <= tol * scale:
            break
    # Final snap: if the converged iterate sits on an input point that
    # passes the optimality check, return the point itself exactly.
    dists = np.linalg.norm(w - y, axis=1)
    coincident = dists < tol * scale
    if coincident.any():
        far = ~coincident
        if not far.any():
            return w[coincident][0]
        units = (w[far] - y) / dists[far, None]
        if np.linalg.norm(units.sum(axis=0)) <= coincident.sum():
            return w[coincident][0]
    return y


def nnm_transform(inputs: Sequence[np.ndarray] | np.ndarray, b_hat: int) -> np.ndarray:
    """Nearest-neighbor mixing: replace each vector by the mean of its
    n - b_hat nearest vectors (itself included), ties broken by lower
    input index."""
    w = _as_matrix(inputs)
    n = w.shape[0]
    if not (0 <= b_hat < n):
        raise ValueError("need 0 <= b_hat < number of inputs")
    keep = n - b_hat
    d2 = ((w[:, None, :] - w[None, :, :]) ** 2).sum(axis=2)
    out = np.empty_like(w)
    for i in range(n):
        order = np.argsort(d2[i], kind="stable")[:keep]
        out[i] = _shifted_mean(w[order])
    return out


def make_aggregator(config: AggregatorConfig, b_hat: int) -> Aggregator:
    """Bind a config and tolerated count into a callable rule."""
    config._check_rule()

    def base(w: np.ndarray) -> np.ndarray:
        if config.rule == "average":
            return average(w)
        if config.rule == "cw_trimmed_mean":
            return cw_trimmed_mean(w, b_hat)
        if config.rule == "cw_median":
            return cw_median(w)
        return geometric_median(w, tol=config.tol, max_iter=config.max_iter)

    if not config.nnm:
        return base

    def mixed(w: np.ndarray) -> np.ndarray:
        return base(nnm_transform(w, b_hat))

    return mixed


def _subset_ratio(w: np.ndarray, agg_out: np.ndarray, subset: tuple[int, ...]) -> float:
    ws = w[list(subset)]
    center = _shifted_mean(ws)
    num = float(((agg_out - center) ** 2).sum()) * len(subset)
    denom = float(((ws - center) ** 2).sum())
    if denom == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / denom


def kappa_empirical(
    inputs: Sequence[np.ndarray] | np.ndarray,
    b_hat: int,
    aggregator: Aggregator,
) -> KappaReport:
    """Exhaustive robustness ratio over all honest subsets of size
    n - b_hat for one instance. Ties keep the lexicographically smallest
    witness subset."""
    w = _as_matrix(inputs)
    n = w.shape[0]
    if n > 20:
        raise ValueError("subset enumeration capped at 20 inputs")
    if not (0 <= b_hat < n):
        raise ValueError("need 0 <= b_hat < number of inputs")
    agg_out = aggregator(w)
    best = -1.0
    witness: tuple[int, ...] = ()
    count = 0
    for subset in itertools.combinations(range(n), n - b_hat):
        ratio = _subset_ratio(w, agg_out, subset)
        count += 1
        if ratio > best:
            best = ratio
            witness = subset
    return KappaReport(kappa_hat=best, witness_subset=witness, instances_tested=count)


def _adversarial_instances(
    n_hat: int, d: int, trials: int, seed: int
) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA66]))
    out: list[np.ndarray] = []
    for _ in range(trials):
        out.append(rng.standard_normal((n_hat, d)))
    # One large outlier.
    w = rng.standard_normal((n_hat, d))
    w[0] *= 1e3
    out.append(w)
    # Two tight clusters.
    w = np.zeros((n_hat, d))
    w[: n_hat // 2] = 1.0
    w += 1e-3 * rng.standard_normal((n_hat, d))
    out.append(w)
    return out


def certify_robustness(
    aggregator: Aggregator,
    n_hat: int,
    b_hat: int,
    kappa_claim: float,
    trials: int = 100,
    seed: int = 0,
    d: int = 3,
) -> tuple[bool, float, Optional[KappaReport]]:
    """Test a claimed robustness constant on random and patterned instances.

    Returns (claim holds everywhere, max observed ratio, first violating
    report if any).
    """
    worst = 0.0
    violation: Optional[KappaReport] = None
    for w in _adversarial_instances(n_hat, d, trials, seed):
        report = kappa_empirical(w, b_hat, aggregator)
        if report.kappa_hat > worst:
            worst = report.kappa_hat
        if report.kappa_hat > kappa_claim and violation is None:
            violation = report
    return violation is None, worst, violation
