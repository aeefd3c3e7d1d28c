"""Four-state non-homogeneous HMM for daily gas demand.

Days are classified as holiday (observed), pre-holiday, post-holiday or
normal; hidden-state transitions depend on the distance to the surrounding
holidays, and log demand in two regions follows a conditionally stationary
bivariate AR(1) around a state-dependent mean with a state-dependent
precision. The package covers covariate construction, exact filtering and
smoothing, Bayesian MCMC fitting, simulation, forecasting and posterior
predictive checking, plus a batch CLI.
"""

__version__ = "0.1.0"

from .covariates import (
    CovariateSeries,
    HolidayCalendar,
    SeasonalCwvBaseline,
    build_covariates,
    smooth_cwv_baseline,
)
from .emission import EmissionParams
from .filtering import backward_smooth, forward_filter, rao_blackwell_states, smooth_states
from .generative import SimulationOutput, default_truth, simulate, uk_holiday_calendar
from .priors import (
    HyperLatents,
    Hyperparameters,
    default_hyperparameters,
    log_prior,
    sample_prior,
)
from .sampler import PosteriorDraws, SamplerConfig, run_mcmc
from .states import ModelMode, TransitionParams

__all__ = [
    "CovariateSeries",
    "EmissionParams",
    "HolidayCalendar",
    "HyperLatents",
    "Hyperparameters",
    "ModelMode",
    "PosteriorDraws",
    "SamplerConfig",
    "SeasonalCwvBaseline",
    "SimulationOutput",
    "TransitionParams",
    "backward_smooth",
    "build_covariates",
    "default_hyperparameters",
    "default_truth",
    "forward_filter",
    "log_prior",
    "rao_blackwell_states",
    "run_mcmc",
    "sample_prior",
    "simulate",
    "smooth_cwv_baseline",
    "smooth_states",
    "uk_holiday_calendar",
]
