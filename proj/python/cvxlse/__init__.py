"""Convex least squares estimation of densities and regression functions."""

from ._cvxlse import (
    ConvexFit,
    DomainError,
    ExperimentError,
    InputError,
    ModeError,
    experiment_config,
    fit_density,
    fit_regression,
    linearity_test,
    make_quantile_table,
    quantile_table,
    run_experiment,
    sample_density,
    simulate_invelope,
    simulate_regression,
    t_statistic,
)

__version__ = "0.1.0"

__all__ = [
    "ConvexFit",
    "DomainError",
    "ExperimentError",
    "InputError",
    "ModeError",
    "experiment_config",
    "fit_density",
    "fit_regression",
    "linearity_test",
    "make_quantile_table",
    "quantile_table",
    "run_experiment",
    "sample_density",
    "simulate_invelope",
    "simulate_regression",
    "t_statistic",
]
