"""Named experiment presets: fixed parameter grids, deterministic per-cell
seeds, parallel cell execution, CSV reporting.

Each preset produces one trace CSV per cell (a cell is one grid point and
one replicate) plus an aggregate table keyed by grid coordinates. Aggregate
statistics are recomputable from the cell CSVs.
"""

from __future__ import annotations

import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

from .aggregation import AggregatorConfig
from .attacks import AttackSpec
from .core import RunConfig, RunMetrics, run_fedro, trace_csv
from .planner import (
    SamplingSpec,
    event_probability_mc,
    impossibility_bound,
    min_tolerable_byz,
    optimal_threshold,
    sampling_threshold,
)
from .rngtools import stable_cell_seed
from .tasks import TaskConfig

__all__ = ["PresetResult", "PRESET_NAMES", "run_preset", "worker_count"]

PRESET_NAMES = (
    "plan_sweep",
    "threshold_break",
    "attack_grid",
    "local_steps_sweep",
    "subsample_sweep",
)


@dataclass(frozen=True)
class PresetResult:
    name: str
    aggregate_csv: str
    cell_csvs: dict[str, str]  # filename -> CSV text


@dataclass(frozen=True)
class _Cell:
    filename: str
    coords: tuple  # grid coordinates (excluding replicate)
    build: Callable[[], RunConfig]


def _fmt(x: float) -> str:
    return repr(float(x))


def worker_count(requested: Optional[int] = None) -> int:
    """Effective parallelism: the request (or CPU count), capped by the
    FEDRO_THREADS environment variable when set."""
    count = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("FEDRO_THREADS")
    if cap is not None:
        count = min(count, max(1, int(cap)))
    return max(1, count)


def _run_cells(
    cells: list[_Cell], workers: Optional[int]
) -> list[tuple[_Cell, RunMetrics, str]]:
    """Execute cells in a thread pool; output order matches input order
    regardless of scheduling, so results are deterministic."""

    def one(cell: _Cell) -> tuple[_Cell, RunMetrics, str]:
        metrics = run_fedro(cell.build())
        return cell, metrics, trace_csv(metrics.traces)

    n_workers = worker_count(workers)
    if n_workers == 1 or len(cells) <= 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(one, cells))


def _aggregate(header: list[str], rows: list[list[str]]) -> str:
    return "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"


# ---------------------------------------------------------------------------
# plan_sweep: planner thresholds as the Byzantine fraction grows.


def _plan_sweep(master_seed: int, workers: Optional[int]) -> PresetResult:
    n, T, p = 1000, 500, 0.99
    rows = []
    for pct in range(5, 50, 5):
        b = n * pct // 100
        spec = SamplingSpec(n=n, b=b, T=T, p=p)
        n_th = sampling_threshold(spec)
        n_opt = optimal_threshold(spec)
        b_star = min_tolerable_byz(spec, n_th)
        rows.append(
            [
                _fmt(b / n),
                str(b),
                str(n_th),
                str(n_opt),
                _fmt(impossibility_bound(spec)),
                "" if b_star is None else str(b_star),
            ]
        )
    agg = _aggregate(
        ["beta", "b", "n_th", "n_opt", "impossibility", "b_star_at_n_th"], rows
    )
    return PresetResult(name="plan_sweep", aggregate_csv=agg, cell_csvs={})


# ---------------------------------------------------------------------------
# threshold_break: violation frequency while under-sampling below n_th.


def _threshold_break(master_seed: int, workers: Optional[int]) -> PresetResult:
    n, b, T, p = 50, 10, 30, 0.9
    reps = 40
    spec = SamplingSpec(n=n, b=b, T=T, p=p)
    n_th = sampling_threshold(spec)
    task = TaskConfig(kind="quadratic", n=n, b=b, d=2, L=1.0, spread=0.5, sigma=0.0)

    cells: list[_Cell] = []
    b_hats: dict[int, int] = {}
    for n_hat in range(1, n_th + 1):
        b_star = min_tolerable_byz(spec, n_hat)
        b_hat = b_star if b_star is not None else max(0, math.ceil(n_hat / 2) - 1)
        b_hats[n_hat] = b_hat
        for rep in range(reps):
            seed = stable_cell_seed("threshold_break", master_seed, n_hat, rep)

            def build(n_hat=n_hat, b_hat=b_hat, seed=seed) -> RunConfig:
                return RunConfig(
                    task=task,
                    n_hat=n_hat,
                    b_hat=b_hat,
                    T=T,
                    K=1,
                    gamma_c=0.1,
                    aggregator=AggregatorConfig(rule="cw_trimmed_mean"),
                    attack=AttackSpec(kind="sign_flipping"),
                    master_seed=seed,
                    violation_mode="takeover_zero",
                )

            cells.append(
                _Cell(f"n_hat={n_hat:02d}_rep={rep:02d}.csv", (n_hat,), build)
            )

    results = _run_cells(cells, workers)
    held: dict[int, list[bool]] = {}
    csvs: dict[str, str] = {}
    for cell, metrics, csv in results:
        csvs[cell.filename] = csv
        held.setdefault(cell.coords[0], []).append(metrics.event_held)

    rows = []
    for n_hat in range(1, n_th + 1):
        freq = 1.0 - sum(held[n_hat]) / len(held[n_hat])
        mc = event_probability_mc(
            spec, n_hat, b_hats[n_hat], trials=4000,
            seed=stable_cell_seed("threshold_break-mc", master_seed, n_hat),
        )
        rows.append(
            [
                str(n_hat),
                str(b_hats[n_hat]),
                _fmt(freq),
                _fmt(1.0 - mc.estimate),
                _fmt(mc.half_width),
            ]
        )
    agg = _aggregate(
        ["n_hat", "b_hat", "violation_freq", "mc_violation_prob", "mc_half_width"], rows
    )
    return PresetResult(name="threshold_break", aggregate_csv=agg, cell_csvs=csvs)


# ---------------------------------------------------------------------------
# attack_grid: every attack against every aggregation rule.


def _attack_grid(master_seed: int, workers: Optional[int]) -> PresetResult:
    task = TaskConfig(kind="quadratic", n=30, b=6, d=5, L=1.0, spread=0.5, sigma=0.5)
    n_hat, b_hat, T, K, reps = 10, 2, 50, 4, 5
    attacks = ("sign_flipping", "foe", "alie", "mimic")
    rules = ("average", "cw_trimmed_mean", "cw_median", "geometric_median")

    cells: list[_Cell] = []
    for attack in attacks:
        for rule in rules:
            for rep in range(reps):
                seed = stable_cell_seed("attack_grid", master_seed, attack, rule, rep)

                def build(attack=attack, rule=rule, seed=seed) -> RunConfig:
                    return RunConfig(
                        task=task,
                        n_hat=n_hat,
                        b_hat=b_hat,
                        T=T,
                        K=K,
                        aggregator=AggregatorConfig(rule=rule),
                        attack=AttackSpec(kind=attack, scale=1.0 if attack == "alie" else None),
                        master_seed=seed,
                        x0=[1.0] * task.d,
                    )

                cells.append(
                    _Cell(f"attack={attack}_rule={rule}_rep={rep:02d}.csv", (attack, rule), build)
                )

    results = _run_cells(cells, workers)
    by_coord: dict[tuple, list[float]] = {}
    csvs: dict[str, str] = {}
    for cell, metrics, csv in results:
        csvs[cell.filename] = csv
        by_coord.setdefault(cell.coords, []).append(metrics.avg_grad_norm_sq)

    rows = [
        [attack, rule, _fmt(statistics.median(by_coord[(attack, rule)]))]
        for attack in attacks
        for rule in rules
    ]
    agg = _aggregate(["attack", "rule", "median_avg_grad_norm_sq"], rows)
    return PresetResult(name="attack_grid", aggregate_csv=agg, cell_csvs=csvs)


# ---------------------------------------------------------------------------
# local_steps_sweep: effect of the local step count K under attack, with the
# client step size scaled as 1/K.


def local_steps_task() -> TaskConfig:
    return TaskConfig(kind="quadratic", n=50, b=10, d=10, L=1.0, spread=0.1, sigma=1.0)


def local_steps_config(K: int, seed: int) -> RunConfig:
    task = local_steps_task()
    return RunConfig(
        task=task,
        n_hat=10,
        b_hat=2,
        T=150,
        K=K,
        gamma_c=1.0 / (36.0 * task.L * K),  # guarantee-compliant, scales as 1/K
        aggregator=AggregatorConfig(rule="cw_trimmed_mean"),
        attack=AttackSpec(kind="alie", scale=1.0),
        master_seed=seed,
    )


def _local_steps_sweep(master_seed: int, workers: Optional[int]) -> PresetResult:
    ks = (1, 4, 16)
    reps = 20
    cells = []
    for K in ks:
        for rep in range(reps):
            seed = stable_cell_seed("local_steps_sweep", master_seed, K, rep)
            cells.append(
                _Cell(
                    f"K={K:02d}_rep={rep:02d}.csv",
                    (K,),
                    lambda K=K, seed=seed: local_steps_config(K, seed),
                )
            )
    results = _run_cells(cells, workers)
    by_k: dict[int, list[float]] = {}
    csvs: dict[str, str] = {}
    for cell, metrics, csv in results:
        csvs[cell.filename] = csv
        by_k.setdefault(cell.coords[0], []).append(metrics.avg_grad_norm_sq)
    rows = [[str(K), _fmt(statistics.median(by_k[K]))] for K in ks]
    agg = _aggregate(["K", "median_avg_grad_norm_sq"], rows)
    return PresetResult(name="local_steps_sweep", aggregate_csv=agg, cell_csvs=csvs)


# ---------------------------------------------------------------------------
# subsample_sweep: error at the feasibility threshold, the saturation
# threshold, and full participation.


def subsample_task() -> tuple[TaskConfig, SamplingSpec]:
    task = TaskConfig(kind="quadratic", n=400, b=40, d=10, L=1.0, spread=0.1, sigma=1.0)
    spec = SamplingSpec(n=400, b=40, T=150, p=0.99)
    return task, spec


def subsample_config(n_hat: int, seed: int) -> RunConfig:
    task, spec = subsample_task()
    b_hat = min_tolerable_byz(spec, n_hat)
    if b_hat is None:
        raise ValueError(f"no feasible tolerated count at n_hat={n_hat}")
    return RunConfig(
        task=task,
        n_hat=n_hat,
        b_hat=b_hat,
        T=spec.T,
        K=4,
        gamma_c=1.0 / (36.0 * task.L * 4),
        aggregator=AggregatorConfig(rule="cw_trimmed_mean"),
        attack=AttackSpec(kind="sign_flipping"),
        master_seed=seed,
    )


def _subsample_sweep(master_seed: int, workers: Optional[int]) -> PresetResult:
    _, spec = subsample_task()
    n_hats = (sampling_threshold(spec), optimal_threshold(spec), spec.n)
    reps = 20
    cells = []
    for n_hat in n_hats:
        for rep in range(reps):
            seed = stable_cell_seed("subsample_sweep", master_seed, n_hat, rep)
            cells.append(
                _Cell(
                    f"n_hat={n_hat:03d}_rep={rep:02d}.csv",
                    (n_hat,),
                    lambda n_hat=n_hat, seed=seed: subsample_config(n_hat, seed),
                )
            )
    results = _run_cells(cells, workers)
    by_n: dict[int, list[float]] = {}
    csvs: dict[str, str] = {}
    for cell, metrics, csv in results:
        csvs[cell.filename] = csv
        by_n.setdefault(cell.coords[0], []).append(metrics.avg_grad_norm_sq)
    rows = [[str(n_hat), _fmt(statistics.median(by_n[n_hat]))] for n_hat in n_hats]
    agg = _aggregate(["n_hat", "median_avg_grad_norm_sq"], rows)
    return PresetResult(name="subsample_sweep", aggregate_csv=agg, cell_csvs=csvs)


_RUNNERS = {
    "plan_sweep": _plan_sweep,
    "threshold_break": _threshold_break,
    "attack_grid": _attack_grid,
    "local_steps_sweep": _local_steps_sweep,
    "subsample_sweep": _subsample_sweep,
}


def run_preset(
    name: str, master_seed: int = 0, workers: Optional[int] = None
) -> PresetResult:
    """Execute a named preset deterministically; the worker count affects
    wall time only, never the outputs."""
    if name not in _RUNNERS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return _RUNNERS[name](master_seed, workers)
