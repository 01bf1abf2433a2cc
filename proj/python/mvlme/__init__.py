"""Bayesian multivariate mixed-effects models for longitudinal outcomes."""

from ._mvlme import (
    NaturalSplineBasis,
    NumericalError,
    ValidationError,
    __version__,
    bayes_p,
    canonical_config,
    effective_sample_size,
    fit,
    fit_strata,
    simulate_csv,
    split_rhat,
    summarize,
)

__all__ = [
    "NaturalSplineBasis",
    "NumericalError",
    "ValidationError",
    "__version__",
    "bayes_p",
    "canonical_config",
    "effective_sample_size",
    "fit",
    "fit_strata",
    "simulate_csv",
    "split_rhat",
    "summarize",
]
