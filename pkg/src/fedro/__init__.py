"""Deterministic simulator and planning toolkit for robust federated
averaging with client subsampling under Byzantine participants."""

from .aggregation import (
    AggregatorConfig,
    average,
    certify_robustness,
    cw_median,
    cw_trimmed_mean,
    geometric_median,
    kappa_empirical,
    make_aggregator,
    nnm_transform,
)
from .attacks import AttackSpec, alie_default_scale, craft_byzantine_updates
from .core import (
    RunConfig,
    RunMetrics,
    RoundTrace,
    plan_step_sizes,
    run_fedro,
    theoretical_error_bound,
    trace_csv,
)
from .planner import (
    SamplingPlan,
    SamplingSpec,
    check_sampling_condition,
    chernoff_lower,
    chernoff_upper,
    event_probability_mc,
    hypergeom_tail_exact,
    impossibility_bound,
    kl_bernoulli,
    make_plan,
    min_tolerable_byz,
    optimal_threshold,
    sampling_threshold,
)
from .presets import PRESET_NAMES, run_preset
from .tasks import TaskConfig, make_quadratic_task, verify_assumptions

__version__ = "0.1.0"
