"""Reconciliation of multi-release measurements with a news/noise state-space model."""

__version__ = "0.1.0"

from .exceptions import (
    ConvergenceError,
    DegenerateModelError,
    InputError,
    ReconError,
    SamplerError,
)
from .vintages import (
    ObservationMatrix,
    VintageObservation,
    VintagePanel,
    parse_vintage_csv,
    serialize_vintage_csv,
    to_observation_matrix,
)
from .ssm import (
    ParamVector,
    ReconConfig,
    StateSpaceModel,
    build_state_space,
    simulate,
    theta_labels,
    theta_pack,
    theta_unpack,
)
from .univariate import UnivariateTheta, univariate_state_space
from .filter import (
    FilterResult,
    SteadyState,
    kalman_filter,
    kalman_gain_weights,
    kalman_smoother,
    rank1_inverse_update,
    riccati_quadratic,
    steady_state,
)
from .sampler import (
    McmcSettings,
    PosteriorDraws,
    PriorSpec,
    draw_coefficients,
    draw_scales,
    draw_states,
    recursive_mean,
    run_gibbs,
)
from .identify import (
    InnovationRep,
    MomentCount,
    check_minimality,
    count_moments,
    equivalent_theta,
    innovation_representation,
)
from .analysis import dynamics_pairs, historical_decomposition, reconciled_series
from .estimator import NewsNoiseReconciler

__all__ = [
    "ConvergenceError", "DegenerateModelError", "InputError", "ReconError", "SamplerError",
    "ObservationMatrix", "VintageObservation", "VintagePanel", "parse_vintage_csv",
    "serialize_vintage_csv", "to_observation_matrix",
    "ParamVector", "ReconConfig", "StateSpaceModel", "build_state_space", "simulate",
    "theta_labels", "theta_pack", "theta_unpack",
    "UnivariateTheta", "univariate_state_space",
    "FilterResult", "SteadyState", "kalman_filter", "kalman_gain_weights", "kalman_smoother",
    "rank1_inverse_update", "riccati_quadratic", "steady_state",
    "McmcSettings", "PosteriorDraws", "PriorSpec", "draw_coefficients", "draw_scales",
    "draw_states", "recursive_mean", "run_gibbs",
    "InnovationRep", "MomentCount", "check_minimality", "count_moments", "equivalent_theta",
    "innovation_representation",
    "dynamics_pairs", "historical_decomposition", "reconciled_series",
    "NewsNoiseReconciler",
]
