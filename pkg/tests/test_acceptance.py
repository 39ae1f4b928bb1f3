"""Acceptance suite: one test per release criterion, each printing a
single pass/fail line with its measured margin."""

import math
import time

import numpy as np
import pytest

from fedro.aggregation import (
    AggregatorConfig,
    average,
    certify_robustness,
    kappa_empirical,
    make_aggregator,
)
from fedro.attacks import AttackSpec
from fedro.checks import run_suite
from fedro.core import RunConfig, run_fedro, trace_csv
from fedro.planner import (
    SamplingSpec,
    event_probability_mc,
    min_tolerable_byz,
    min_tolerable_byz_scan,
    sampling_threshold,
)
from fedro.presets import (
    local_steps_config,
    local_steps_task,
    run_preset,
)
from fedro.rngtools import TAG_GRAD, child_rng, stable_cell_seed
from fedro.tasks import TaskConfig, make_quadratic_task


def _report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:02d} {name}: {detail}")
    assert ok, f"criterion {num:02d} {name}: {detail}"


@pytest.fixture(scope="module")
def local_steps_result():
    return run_preset("local_steps_sweep", master_seed=0, workers=2)


@pytest.fixture(scope="module")
def subsample_result():
    return run_preset("subsample_sweep", master_seed=0, workers=2)


def _agg_rows(result) -> list[list[str]]:
    return [line.split(",") for line in result.aggregate_csv.strip().split("\n")[1:]]


def test_criterion_01_planner_exactness():
    spec_a = SamplingSpec(n=150, b=15, T=500, p=0.99)
    spec_b = SamplingSpec(n=150, b=15, T=1500, p=0.99)
    best = math.inf
    for _ in range(5):
        start = time.perf_counter()
        got_a = sampling_threshold(spec_a)
        got_b = sampling_threshold(spec_b)
        best = min(best, time.perf_counter() - start)
    ok = got_a == 26 and got_b == 29 and best < 1e-3
    _report(1, "planner exactness", ok,
            f"n_th(T=500)={got_a} n_th(T=1500)={got_b} runtime={best * 1e6:.1f}us")


def test_criterion_02_solver_consistency():
    start = time.perf_counter()
    mismatches = 0
    checked = 0
    for n in range(10, 61):
        for b in range((n - 1) // 2 + 1):
            for T in (10, 100, 1000):
                for p in (0.9, 0.99):
                    spec = SamplingSpec(n=n, b=b, T=T, p=p)
                    for n_hat in range(1, n + 1):
                        checked += 1
                        if min_tolerable_byz(spec, n_hat) != min_tolerable_byz_scan(
                            spec, n_hat
                        ):
                            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30
    _report(2, "tolerated-count solver consistency", ok,
            f"{checked} instances, {mismatches} mismatches, {elapsed:.1f}s")


def test_criterion_03_divergence_properties():
    start = time.perf_counter()
    report = run_suite("d-properties")
    elapsed = time.perf_counter() - start
    m = report.margins
    ok = (
        report.passed
        and m["max_derivative_error"] <= 1e-6
        and m["min_convexity_slack"] >= -1e-9
        and m["max_diagonal_value"] <= 1e-12
        and elapsed < 1
    )
    _report(3, "divergence calculus properties", ok,
            f"deriv_err={m['max_derivative_error']:.2e} "
            f"convexity_slack={m['min_convexity_slack']:.2e} {elapsed:.2f}s")


def test_criterion_04_tail_bound_sandwich():
    start = time.perf_counter()
    report = run_suite("chernoff")
    elapsed = time.perf_counter() - start
    m = report.margins
    ok = report.passed and m["min_upper_slack"] >= 0 and m["min_lower_slack"] >= 0 and elapsed < 10
    _report(4, "exact-tail sandwich", ok,
            f"{int(m['instances'])} instances, "
            f"slacks=({m['min_lower_slack']:.2e}, {m['min_upper_slack']:.2e}), {elapsed:.1f}s")


def test_criterion_05_event_statistics():
    start = time.perf_counter()
    spec = SamplingSpec(n=150, b=15, T=500, p=0.99)
    est = event_probability_mc(spec, 26, 12, trials=2000, seed=0)
    floor = 0.99 - 3 * math.sqrt(0.01 * 0.99 / 2000)
    tiny_spec = SamplingSpec(n=10, b=2, T=500, p=0.99)
    est_tiny = event_probability_mc(tiny_spec, 1, 0, trials=2000, seed=0)
    elapsed = time.perf_counter() - start
    ok = est.estimate >= floor and est_tiny.estimate <= 0.01 and elapsed < 60
    _report(5, "per-round event statistics", ok,
            f"P_hat={est.estimate:.4f} (floor {floor:.4f}), "
            f"undersampled P_hat={est_tiny.estimate:.4f}, {elapsed:.1f}s")


def test_criterion_06_robustness_certification():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        w = rng.standard_normal((8, 3))
        worst = max(worst, kappa_empirical(w, 0, average).kappa_hat)
    w = np.array([[1.0], [2.0], [3.0], [100.0]])
    agg = make_aggregator(AggregatorConfig(rule="cw_trimmed_mean"), 1)
    report = kappa_empirical(w, 1, agg)
    witness_vals = [float(w[i, 0]) for i in report.witness_subset]
    elapsed = time.perf_counter() - start
    ok = (
        worst <= 1e-12
        and abs(report.kappa_hat - 0.49996) <= 1e-4
        and witness_vals == [2.0, 3.0, 100.0]
        and elapsed < 5
    )
    _report(6, "robustness certification", ok,
            f"avg_kappa={worst:.1e} trimmed_kappa={report.kappa_hat:.5f} "
            f"witness={witness_vals}, {elapsed:.1f}s")


def _agreement_config(attack: str) -> RunConfig:
    # Noiseless homogeneous task; client step chosen so gamma_c * L * K = 1/16.
    return RunConfig(
        task=TaskConfig(kind="quadratic", n=20, b=6, d=3, L=1.0, spread=0.0, sigma=0.0),
        n_hat=10, b_hat=4, T=200, K=4, gamma_c=1 / 64, gamma_s=1.0,
        aggregator=AggregatorConfig(rule="cw_trimmed_mean"),
        attack=AttackSpec(kind=attack),
        master_seed=7, x0=[3e-6, 3e-6, 3e-6],
    )


def test_criterion_07_exactness_under_agreement():
    start = time.perf_counter()
    worst_final = 0.0
    worst_dev = 0.0
    for attack in ("sign_flipping", "foe", "alie", "mimic"):
        metrics = run_fedro(_agreement_config(attack))
        final_grad_sq = float((metrics.final_model**2).sum())  # centers at 0, L=1
        worst_final = max(worst_final, final_grad_sq)
        for tr in metrics.traces:
            if not tr.event_violated:
                worst_dev = max(worst_dev, tr.dev_norm_sq)
    elapsed = time.perf_counter() - start
    ok = worst_final <= 1e-18 and worst_dev == 0.0 and elapsed < 1
    _report(7, "exactness under agreement", ok,
            f"final_grad_sq<={worst_final:.2e} max_dev={worst_dev} {elapsed:.2f}s")


def test_criterion_08_plain_averaging_reduction():
    start = time.perf_counter()
    n, d, T, gamma_c, gamma_s, seed = 6, 3, 40, 0.05, 1.0, 21
    task_cfg = TaskConfig(kind="quadratic", n=n, b=0, d=d, L=1.0, spread=0.7, sigma=0.9)
    config = RunConfig(
        task=task_cfg, n_hat=n, b_hat=0, T=T, K=1, gamma_c=gamma_c, gamma_s=gamma_s,
        aggregator=AggregatorConfig(rule="average"), master_seed=seed,
    )
    metrics = run_fedro(config)

    task, _ = make_quadratic_task(task_cfg, seed)
    x = np.zeros(d)
    ref_grads = []
    per_coord = task.noise_sigma / np.sqrt(d)
    for t in range(T):
        grad = task.L * (x - task.honest_center)
        ref_grads.append(float((grad**2).sum()))
        X = np.tile(x, (n, 1))
        noise = np.stack(
            [child_rng(seed, TAG_GRAD, t, cid).normal(0.0, per_coord, size=(1, d))[0]
             for cid in range(n)]
        )
        G = task.L * (X - task.centers) + noise
        X_new = X - gamma_c * G
        U = X_new - X
        agg = U[0] + (U - U[0]).mean(axis=0)
        x = x + gamma_s * agg
    elapsed = time.perf_counter() - start
    ok = (
        [tr.grad_norm_sq for tr in metrics.traces] == ref_grads
        and np.array_equal(metrics.final_model, x)
        and elapsed < 1
    )
    _report(8, "plain-averaging reduction bit-for-bit", ok,
            f"T={T} rounds identical, {elapsed:.2f}s")


def test_criterion_09_local_steps_benefit(local_steps_result):
    rows = _agg_rows(local_steps_result)
    ks = [int(r[0]) for r in rows]
    medians = [float(r[1]) for r in rows]
    ok = ks == [1, 4, 16] and medians[0] > medians[1] > medians[2]
    _report(9, "local-steps benefit", ok,
            "medians " + " > ".join(f"{m:.3e}" for m in medians))


def test_criterion_10_diminishing_return(subsample_result):
    rows = _agg_rows(subsample_result)
    medians = [float(r[1]) for r in rows]
    gain_th_to_opt = medians[0] - medians[1]
    gain_opt_to_full = medians[1] - medians[2]
    ok = gain_th_to_opt > 0 and gain_opt_to_full <= 0.25 * gain_th_to_opt
    ratio = gain_opt_to_full / gain_th_to_opt if gain_th_to_opt > 0 else math.inf
    _report(10, "diminishing return of larger samples", ok,
            f"errors={[f'{m:.3e}' for m in medians]} improvement_ratio={ratio:.3f}")


def test_criterion_11_spread_and_deviation_diagnostics():
    start = time.perf_counter()
    K = 4
    gamma_c = 1.0 / (36.0 * K)
    agg = make_aggregator(AggregatorConfig(rule="cw_trimmed_mean"), 2)
    _, kappa_hat, _ = certify_robustness(agg, 10, 2, math.inf, trials=100, seed=0)
    spread_ratios = []
    dev_ratios = []
    for rep in range(20):
        seed = stable_cell_seed("local_steps_sweep", 0, K, rep)
        config = local_steps_config(K, seed)
        _, constants = make_quadratic_task(local_steps_task(), seed)
        metrics = run_fedro(config)
        sigma2, zeta2 = constants.sigma**2, constants.zeta**2
        spread_bound = 3 * K * sigma2 * gamma_c**2 + 18 * K**2 * gamma_c**2 * zeta2
        dev_bound = kappa_hat * spread_bound
        avg_spread = float(np.mean([tr.honest_spread for tr in metrics.traces]))
        avg_dev = float(np.mean([tr.dev_norm_sq for tr in metrics.traces]))
        spread_ratios.append(avg_spread / spread_bound)
        dev_ratios.append(avg_dev / dev_bound)
    med_spread = float(np.median(spread_ratios))
    med_dev = float(np.median(dev_ratios))
    elapsed = time.perf_counter() - start
    ok = med_spread <= 1.2 and med_dev <= 1.2 and elapsed < 300
    _report(11, "update-spread and deviation diagnostics", ok,
            f"median spread/bound={med_spread:.3f} dev/bound={med_dev:.3f} "
            f"(kappa_hat={kappa_hat:.3f}) {elapsed:.0f}s")


def test_criterion_12_worker_count_determinism(local_steps_result, subsample_result):
    start = time.perf_counter()
    redo_local = run_preset("local_steps_sweep", master_seed=0, workers=1)
    redo_sub = run_preset("subsample_sweep", master_seed=0, workers=5)
    same_presets = (
        redo_local.aggregate_csv == local_steps_result.aggregate_csv
        and redo_local.cell_csvs == local_steps_result.cell_csvs
        and redo_sub.aggregate_csv == subsample_result.aggregate_csv
        and redo_sub.cell_csvs == subsample_result.cell_csvs
    )
    csv_a = trace_csv(run_fedro(_agreement_config("foe")).traces)
    csv_b = trace_csv(run_fedro(_agreement_config("foe")).traces)
    elapsed = time.perf_counter() - start
    ok = same_presets and csv_a == csv_b
    _report(12, "determinism across worker counts", ok,
            f"{len(redo_local.cell_csvs) + len(redo_sub.cell_csvs)} cell files "
            f"byte-identical, {elapsed:.0f}s")
