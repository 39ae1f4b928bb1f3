"""Self-verification suites exposed through the `check` command.

Each suite exercises one family of analytical facts the package relies on
(divergence calculus, tail-bound sandwich, aggregation robustness, task
constants) and reports a pass flag with worst-case margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregatorConfig, certify_robustness, make_aggregator
from .planner import chernoff_lower, chernoff_upper, hypergeom_tail_exact, kl_bernoulli
from .tasks import TaskConfig, make_quadratic_task, verify_assumptions

__all__ = ["SuiteReport", "SUITES", "run_suite"]


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    passed: bool
    margins: dict[str, float] = field(default_factory=dict)
    details: str = ""


def _d_properties() -> SuiteReport:
    """Calculus of the Bernoulli divergence D(a||b): zero on the diagonal,
    positive off it, increasing in a above b and decreasing below, convex in
    a, with derivative ln(a/b) - ln((1-a)/(1-b))."""
    grid = [i / 20 for i in range(1, 20)]
    eps = 1e-7
    worst_deriv = 0.0
    worst_diag = 0.0
    min_positivity = math.inf
    min_convexity = math.inf
    mono_ok = True
    for beta in grid:
        worst_diag = max(worst_diag, abs(kl_bernoulli(beta, beta)))
        for alpha in grid:
            if alpha != beta:
                min_positivity = min(min_positivity, kl_bernoulli(alpha, beta))
            if eps < alpha < 1 - eps:
                fd = (kl_bernoulli(alpha + eps, beta) - kl_bernoulli(alpha - eps, beta)) / (
                    2 * eps
                )
                exact = math.log(alpha / beta) - math.log((1 - alpha) / (1 - beta))
                worst_deriv = max(worst_deriv, abs(fd - exact))
            if 0 < alpha - 0.05 and alpha + 0.05 < 1:
                mid = kl_bernoulli(alpha, beta)
                chord = 0.5 * (
                    kl_bernoulli(alpha - 0.05, beta) + kl_bernoulli(alpha + 0.05, beta)
                )
                min_convexity = min(min_convexity, chord - mid)
        # Monotone increasing above beta, decreasing below.
        above = [a for a in grid if a >= beta]
        below = [a for a in grid if a <= beta]
        vals_up = [kl_bernoulli(a, beta) for a in above]
        vals_down = [kl_bernoulli(a, beta) for a in below]
        mono_ok &= all(x <= y for x, y in zip(vals_up, vals_up[1:]))
        mono_ok &= all(x >= y for x, y in zip(vals_down, vals_down[1:]))
    passed = (
        worst_deriv <= 1e-6
        and worst_diag <= 1e-12
        and min_positivity > 0
        and min_convexity >= -1e-9
        and mono_ok
    )
    return SuiteReport(
        suite="d-properties",
        passed=passed,
        margins={
            "max_derivative_error": worst_deriv,
            "max_diagonal_value": worst_diag,
            "min_off_diagonal_value": min_positivity,
            "min_convexity_slack": min_convexity,
        },
        details="monotone" if mono_ok else "monotonicity violated",
    )


def _chernoff() -> SuiteReport:
    """Sandwich the exact hypergeometric upper tail between the exponential
    lower and upper bounds on every grid instance with integer alpha*m."""
    min_upper_slack = math.inf
    min_lower_slack = math.inf
    instances = 0
    for beta in (0.1, 0.2, 0.3):
        for M in range(10, 61, 10):
            K = round(beta * M)
            if abs(K - beta * M) > 1e-12:
                continue
            for m in range(1, M + 1):
                for a in range(1, m + 1):
                    alpha = a / m
                    if not (beta < alpha < 1.0):
                        continue
                    exact = hypergeom_tail_exact(M, K, m, a)
                    upper = chernoff_upper(m, alpha, beta)
                    lower = chernoff_lower(M, m, alpha, beta)
                    min_upper_slack = min(min_upper_slack, upper - exact)
                    min_lower_slack = min(min_lower_slack, exact - lower)
                    instances += 1
    passed = min_upper_slack >= 0 and min_lower_slack >= 0
    return SuiteReport(
        suite="chernoff",
        passed=passed,
        margins={
            "min_upper_slack": min_upper_slack,
            "min_lower_slack": min_lower_slack,
            "instances": float(instances),
        },
    )


def _kappa(rule: str = "average", b_hat: int = 0, nnm: bool = False) -> SuiteReport:
    """Empirical robustness of a rule: worst subset ratio over adversarial
    instances, compared against the plain-average zero claim when b_hat=0."""
    n_hat = 8
    agg = make_aggregator(AggregatorConfig(rule=rule, nnm=nnm), b_hat)
    claim = 1e-12 if (rule == "average" and b_hat == 0) else math.inf
    ok, worst, violation = certify_robustness(agg, n_hat, b_hat, claim, trials=50, seed=0)
    return SuiteReport(
        suite="kappa",
        passed=ok,
        margins={"kappa_hat": worst, "b_hat": float(b_hat)},
        details=f"rule={rule} nnm={nnm}"
        + ("" if violation is None else f" witness={violation.witness_subset}"),
    )


def _assumptions() -> SuiteReport:
    """Empirical re-estimation of the quadratic task constants against their
    closed forms."""
    config = TaskConfig(kind="quadratic", n=30, b=5, d=4, L=2.0, spread=1.0, sigma=0.7)
    task, constants = make_quadratic_task(config, seed=7)
    report = verify_assumptions(task, sample_count=20_000, seed=7)
    l_err = abs(report.L_hat - constants.L) / constants.L
    sigma_err = abs(report.sigma2_hat - constants.sigma**2) / constants.sigma**2
    zeta_err = abs(report.zeta2_hat - constants.zeta**2) / max(constants.zeta**2, 1e-30)
    passed = l_err <= 1e-9 and sigma_err <= 0.05 and zeta_err <= 1e-9
    return SuiteReport(
        suite="assumptions",
        passed=passed,
        margins={
            "L_relative_error": l_err,
            "sigma2_relative_error": sigma_err,
            "zeta2_relative_error": zeta_err,
        },
    )


SUITES = ("d-properties", "chernoff", "kappa", "assumptions")


def run_suite(suite: str, rule: str = "average", b_hat: int = 0, nnm: bool = False) -> SuiteReport:
    if suite == "d-properties":
        return _d_properties()
    if suite == "chernoff":
        return _chernoff()
    if suite == "kappa":
        return _kappa(rule=rule, b_hat=b_hat, nnm=nnm)
    if suite == "assumptions":
        return _assumptions()
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
