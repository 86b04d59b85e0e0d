"""Bayesian multiple change-point analysis of Poisson threshold-exceedance data."""

from ._exceptions import (
    ConfigurationError,
    DataError,
    ImputationError,
    InsufficientDataError,
    NumericalError,
)
from .estimators import ExceedanceExtractor, MissingValueImputer, SeasonalAdjuster, StepRateChangepoint
from .events import (
    CountingPath,
    ExceedanceSeries,
    StepRate,
    counting_path,
    log_likelihood,
    simulate_conditional,
    simulate_direct,
    simulate_thinning,
    time_rescale,
)
from .posterior import PosteriorEnsemble, k_distribution, point_estimate
from .rjmcmc import ChainConfig, PriorConfig, run_chain
from .validation import iterate_pipeline, replicate_predictive

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DataError",
    "ImputationError",
    "InsufficientDataError",
    "NumericalError",
    "ExceedanceExtractor",
    "MissingValueImputer",
    "SeasonalAdjuster",
    "StepRateChangepoint",
    "CountingPath",
    "ExceedanceSeries",
    "StepRate",
    "counting_path",
    "log_likelihood",
    "simulate_conditional",
    "simulate_direct",
    "simulate_thinning",
    "time_rescale",
    "PosteriorEnsemble",
    "k_distribution",
    "point_estimate",
    "ChainConfig",
    "PriorConfig",
    "run_chain",
    "iterate_pipeline",
    "replicate_predictive",
]
