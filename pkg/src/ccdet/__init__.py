"""Quickest change detection from compressive linear measurements.

Library layout:

- sensing:     random measurement-matrix families, projections, matched filters
- detector:    the Bayesian posterior-odds statistic and stopping rule
- theory:      closed-form delay bounds, ratio brackets, measurement planner
- montecarlo:  reproducible trial simulation and estimation
- cli:         figure-ready CSV/JSON front end (``ccdet`` console script)
"""

from .detector import (
    DetectorConfig,
    ShiryaevState,
    direct_log_statistic,
    direct_statistic,
    has_stopped,
    init_state,
    llr_increment,
    threshold_from_alpha,
    update,
)
from .montecarlo import (
    MonteCarloEstimate,
    TrialOutcome,
    TrialSpec,
    aggregate,
    concentration_experiment,
    default_horizon,
    derive_seed,
    estimate,
    estimate_delay_ratio,
    find_concentration_matrix,
    run_trial,
    simulate_outcomes,
)
from .sensing import (
    Construction,
    ConstructionError,
    MatchedFilter,
    SensingMatrix,
    Signal,
    build_matrix,
    generate_sparse_signal,
    gershgorin_lambda_max_bound,
    gram_extremes,
    load_matrix,
    matched_filter,
    orthonormalize,
    projection_energy,
    save_matrix,
)
from .theory import (
    ConcentrationConstants,
    DelayBounds,
    MeasurementPlan,
    RatioBounds,
    ToeplitzBound,
    add_asymptotic,
    add_bounds_projection,
    add_bounds_rip,
    add_upper_toeplitz,
    concentration_probability,
    db_to_linear,
    delay_ratio_bounds,
    kl_compressed,
    linear_to_db,
    plan_measurements,
)

__version__ = "0.1.0"

__all__ = [
    "Construction",
    "ConstructionError",
    "ConcentrationConstants",
    "DelayBounds",
    "DetectorConfig",
    "MatchedFilter",
    "MeasurementPlan",
    "MonteCarloEstimate",
    "RatioBounds",
    "SensingMatrix",
    "ShiryaevState",
    "Signal",
    "ToeplitzBound",
    "TrialOutcome",
    "TrialSpec",
    "add_asymptotic",
    "add_bounds_projection",
    "add_bounds_rip",
    "add_upper_toeplitz",
    "aggregate",
    "build_matrix",
    "concentration_experiment",
    "concentration_probability",
    "db_to_linear",
    "default_horizon",
    "delay_ratio_bounds",
    "derive_seed",
    "direct_log_statistic",
    "direct_statistic",
    "estimate",
    "estimate_delay_ratio",
    "find_concentration_matrix",
    "generate_sparse_signal",
    "gershgorin_lambda_max_bound",
    "gram_extremes",
    "has_stopped",
    "init_state",
    "kl_compressed",
    "linear_to_db",
    "llr_increment",
    "load_matrix",
    "matched_filter",
    "orthonormalize",
    "plan_measurements",
    "projection_energy",
    "run_trial",
    "save_matrix",
    "simulate_outcomes",
    "threshold_from_alpha",
    "update",
]
