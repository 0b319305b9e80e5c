"""Extremal clustering of non-stationary sequences with periodic dependence."""

__version__ = "0.1.0"

from .core import (
    EstimateRecord,
    Family,
    InterexceedanceSet,
    InvalidSpecError,
    MissingDataError,
    NoExceedancesError,
    PeriodicModelSpec,
    Series,
    SimulationError,
    ThresholdSpec,
    empirical_quantiles,
    extract_exceedances,
    interexceedance_partition,
    interexceedances,
    phase_of,
    resolve_threshold,
)
from .estimators import (
    MleOptions,
    estimate,
    estimate_thetas_intervals,
    intervals_hat,
    intervals_star,
    intervals_tilde,
    log_likelihood,
    mle_fit,
    moment_solution,
    moments_T,
)
from .models import (
    PRESETS,
    RngStream,
    logistic_conditional_cdf,
    preset,
    simulate,
    simulate_gaussian_ar,
    simulate_logistic_markov,
    validate_margins,
)
