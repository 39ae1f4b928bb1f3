"""Client-subsampling planner.

Closed-form thresholds and probability bounds for deciding how many clients
to sample per round (and how many Byzantine clients to tolerate per round)
so that no round contains a Byzantine majority beyond the tolerated count,
with a target success probability over the whole training run.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

__all__ = [
    "SamplingSpec",
    "SamplingPlan",
    "ConditionStatus",
    "McEstimate",
    "kl_bernoulli",
    "check_sampling_condition",
    "min_tolerable_byz",
    "min_tolerable_byz_scan",
    "sampling_threshold",
    "optimal_threshold",
    "impossibility_bound",
    "hypergeom_tail_exact",
    "chernoff_upper",
    "chernoff_lower",
    "event_probability_mc",
    "make_plan",
]


class SamplingSpec(BaseModel):
    """Population-level sampling problem: n clients, at most b Byzantine,
    T rounds, target success probability p."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int
    b: int
    T: int
    p: float

    @model_validator(mode="after")
    def _check(self) -> "SamplingSpec":
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if not (0 <= self.b < self.n / 2):
            raise ValueError("b must satisfy 0 <= b < n/2")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not (0.0 <= self.p < 1.0):
            raise ValueError("p must lie in [0, 1)")
        return self


class SamplingPlan(BaseModel):
    """Derived per-round sampling parameters and thresholds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_hat: int
    b_hat: Optional[int]
    n_th: int
    n_opt: int
    feasible: bool


class ConditionStatus(str, enum.Enum):
    """Outcome of the sample-size condition check.

    INFEASIBLE_RATIO means the required strict ordering
    b/n < b_hat/n_hat < 1/2 does not hold, so the condition is not
    even well-posed for this (n_hat, b_hat) pair.
    """

    HOLDS = "holds"
    FAILS = "fails"
    INFEASIBLE_RATIO = "infeasible_ratio"


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo probability estimate with a 95% normal-approximation
    binomial half-width."""

    estimate: float
    half_width: float
    trials: int


def kl_bernoulli(alpha: float, beta: float) -> float:
    """KL divergence between Bernoulli(alpha) and Bernoulli(beta).

    Both arguments must lie strictly inside (0, 1). Nonnegative, zero
    exactly on the diagonal, convex and monotone away from beta in the
    first argument.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    if not (0.0 < beta < 1.0):
        raise ValueError(f"beta must be in (0,1), got {beta}")
    if alpha == beta:
        return 0.0
    return alpha * math.log(alpha / beta) + (1.0 - alpha) * math.log(
        (1.0 - alpha) / (1.0 - beta)
    )


def _log_threshold(spec: SamplingSpec) -> float:
    return math.log(spec.T / (1.0 - spec.p))


def check_sampling_condition(
    spec: SamplingSpec, n_hat: int, b_hat: int
) -> ConditionStatus:
    """Check whether (n_hat, b_hat) is a sufficient per-round sampling choice.

    Holds when n_hat equals n (full participation) or when n_hat is at least
    the divergence-scaled log threshold ln(T/(1-p)) / D(b_hat/n_hat || b/n).
    """
    if not (1 <= n_hat <= spec.n):
        raise ValueError("n_hat must satisfy 1 <= n_hat <= n")
    if spec.b == 0:
        # No adversary: trivially satisfied.
        return ConditionStatus.HOLDS
    ratio = b_hat / n_hat
    beta = spec.b / spec.n
    if not (beta < ratio < 0.5):
        return ConditionStatus.INFEASIBLE_RATIO
    if n_hat == spec.n:
        # Full participation: trivially satisfied.
        return ConditionStatus.HOLDS
    if n_hat * kl_bernoulli(ratio, beta) >= _log_threshold(spec):
        return ConditionStatus.HOLDS
    return ConditionStatus.FAILS


def _b_hat_range(spec: SamplingSpec, n_hat: int) -> tuple[int, int]:
    """Integer candidate interval [lo, hi] of tolerated counts with
    b/n < b_hat/n_hat < 1/2 enforced strictly."""
    exact = spec.b * n_hat / spec.n
    lo = math.ceil(exact)
    if spec.b * n_hat % spec.n == 0:
        lo += 1  # strict inequality b/n < b_hat/n_hat
    hi = math.ceil(n_hat / 2) - 1
    return lo, hi


def _condition_at(spec: SamplingSpec, n_hat: int, b_hat: int) -> bool:
    if n_hat == spec.n:
        return True
    return n_hat * kl_bernoulli(b_hat / n_hat, spec.b / spec.n) >= _log_threshold(spec)


def min_tolerable_byz(spec: SamplingSpec, n_hat: int) -> Optional[int]:
    """Smallest per-round tolerated Byzantine count b_hat* feasible at n_hat.

    Binary search over the candidate interval; valid because the divergence
    is increasing in b_hat above the population ratio. None when no feasible
    b_hat exists at this sample size.
    """
    if not (1 <= n_hat <= spec.n):
        raise ValueError("n_hat must satisfy 1 <= n_hat <= n")
    if spec.b == 0:
        return 0
    lo, hi = _b_hat_range(spec, n_hat)
    if lo > hi:
        return None
    if not _condition_at(spec, n_hat, hi):
        return None
    while lo < hi:
        mid = (lo + hi) // 2
        if _condition_at(spec, n_hat, mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def min_tolerable_byz_scan(spec: SamplingSpec, n_hat: int) -> Optional[int]:
    """Exhaustive ascending scan; reference implementation used to validate
    the binary search at interval endpoints."""
    if not (1 <= n_hat <= spec.n):
        raise ValueError("n_hat must satisfy 1 <= n_hat <= n")
    if spec.b == 0:
        return 0
    lo, hi = _b_hat_range(spec, n_hat)
    for b_hat in range(lo, hi + 1):
        if _condition_at(spec, n_hat, b_hat):
            return b_hat
    return None


def sampling_threshold(spec: SamplingSpec) -> int:
    """Smallest sample size guaranteeing a feasible tolerated count exists,
    clamped to n."""
    if spec.b == 0:
        return 1
    beta = spec.b / spec.n
    raw = math.ceil(math.log(4 * spec.T / (1.0 - spec.p)) / kl_bernoulli(0.5, beta)) + 2
    return min(spec.n, raw)


def optimal_threshold(spec: SamplingSpec) -> int:
    """Sample size beyond which the tolerated ratio is within a constant
    factor of the population ratio, clamped to n."""
    if spec.b == 0:
        return 1
    beta = spec.b / spec.n
    coeff = max(1.0 / (0.5 - beta) ** 2, 3.0 / beta)
    raw = math.ceil(coeff * math.log(4 * spec.T / (1.0 - spec.p))) + 2
    return min(spec.n, raw)


def sampling_threshold_unclamped(spec: SamplingSpec) -> int:
    if spec.b == 0:
        return 1
    beta = spec.b / spec.n
    return math.ceil(math.log(4 * spec.T / (1.0 - spec.p)) / kl_bernoulli(0.5, beta)) + 2


def optimal_threshold_unclamped(spec: SamplingSpec) -> int:
    if spec.b == 0:
        return 1
    beta = spec.b / spec.n
    coeff = max(1.0 / (0.5 - beta) ** 2, 3.0 / beta)
    return math.ceil(coeff * math.log(4 * spec.T / (1.0 - spec.p))) + 2


def impossibility_bound(spec: SamplingSpec) -> float:
    """Sample sizes strictly below this value cannot keep the per-round
    Byzantine count controlled with probability p; advisory 'unsafe' line."""
    if spec.p < 0.5:
        raise ValueError("impossibility bound requires p >= 1/2")
    if spec.b == 0:
        return 0.0
    beta = spec.b / spec.n
    return (
        math.log(spec.T / (3.0 * (1.0 - spec.p))) / (kl_bernoulli(0.5, beta) + 2.0)
        - 1.0
    )


def _log_comb(a: int, k: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(k + 1) - math.lgamma(a - k + 1)


def hypergeom_tail_exact(M: int, K: int, m: int, k: int) -> float:
    """Exact upper tail P[X >= k] for X ~ Hypergeometric(M, K, m).

    Log-gamma term evaluation with compensated summation; sums the smaller
    of the two tails for accuracy.
    """
    if not (0 <= K <= M):
        raise ValueError("need 0 <= K <= M")
    if not (0 <= m <= M):
        raise ValueError("need 0 <= m <= M")
    if not (0 <= k <= m):
        raise ValueError("need 0 <= k <= m")
    k_min = max(0, m - (M - K))
    k_max = min(m, K)
    if k <= k_min:
        return 1.0
    if k > k_max:
        return 0.0
    log_denom = _log_comb(M, m)

    def pmf_terms(lo: int, hi: int) -> list[float]:
        return [
            math.exp(_log_comb(K, j) + _log_comb(M - K, m - j) - log_denom)
            for j in range(lo, hi + 1)
        ]

    # Sum whichever tail is shorter, then complement if needed.
    if (k_max - k) <= (k - 1 - k_min):
        return min(1.0, math.fsum(pmf_terms(k, k_max)))
    return max(0.0, 1.0 - math.fsum(pmf_terms(k_min, k - 1)))


def chernoff_upper(m: int, alpha: float, beta: float) -> float:
    """Exponential upper bound exp(-m D(alpha||beta)) on the upper tail
    P[X >= alpha*m] of a hypergeometric sample of size m with population
    ratio beta."""
    if not (0.0 < beta < alpha < 1.0):
        raise ValueError("need 0 < beta < alpha < 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.exp(-m * kl_bernoulli(alpha, beta))


def chernoff_lower(M: float, m: int, alpha: float, beta: float) -> float:
    """Matching lower bound on the same tail, valid when alpha*m is an
    integer; includes the finite-population correction (m-1)/(M-1).
    Pass M = math.inf to drop the correction term."""
    if not (0.0 < beta < alpha < 1.0):
        raise ValueError("need 0 < beta < alpha < 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    am = alpha * m
    if abs(am - round(am)) > 1e-9:
        raise ValueError(f"alpha*m must be an integer, got {am}")
    if math.isinf(M):
        correction = 0.0
    else:
        if m > M:
            raise ValueError("need m <= M")
        correction = (m - 1) / (M - 1)
    return (
        math.exp(-m * kl_bernoulli(alpha, beta)) / math.sqrt(8.0 * m * alpha * (1.0 - alpha))
        - correction
    )


def event_probability_mc(
    spec: SamplingSpec, n_hat: int, b_hat: int, trials: int, seed: int
) -> McEstimate:
    """Monte Carlo estimate of the probability that, across T independent
    without-replacement samples of size n_hat, every round contains at most
    b_hat Byzantine clients. Deterministic given the seed."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (1 <= n_hat <= spec.n):
        raise ValueError("n_hat must satisfy 1 <= n_hat <= n")
    if spec.b == 0:
        return McEstimate(estimate=1.0, half_width=0.0, trials=trials)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE5E]))
    draws = rng.hypergeometric(spec.b, spec.n - spec.b, n_hat, size=(trials, spec.T))
    successes = int(np.all(draws <= b_hat, axis=1).sum())
    p_hat = successes / trials
    half = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / trials)
    return McEstimate(estimate=p_hat, half_width=half, trials=trials)


def make_plan(spec: SamplingSpec, n_hat: Optional[int] = None) -> SamplingPlan:
    """Assemble thresholds and, if a sample size is given, its minimal
    tolerated Byzantine count."""
    n_th = sampling_threshold(spec)
    n_opt = optimal_threshold(spec)
    if n_hat is None:
        n_hat = n_th
    b_hat = min_tolerable_byz(spec, n_hat)
    return SamplingPlan(
        n_hat=n_hat,
        b_hat=b_hat,
        n_th=n_th,
        n_opt=n_opt,
        feasible=b_hat is not None,
    )
