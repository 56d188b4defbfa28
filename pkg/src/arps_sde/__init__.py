"""Stochastic Arps decline curves: exact moments, simulation, passage times.

Two diffusions share the deterministic Arps decline curve as their mean: one
with constant volatility (a Gaussian process) and one with volatility
proportional to the rate (lognormal marginals).  The package evaluates their
closed-form moments, simulates paths exactly or by Euler stepping under
reproducible counter-based noise streams, and estimates first-passage times
to a production threshold with closed-form, series, transform and Monte
Carlo tools.
"""

from .decline import (
    EPS_B,
    ArpsParams,
    BoundaryValues,
    ModelKind,
    MomentSummary,
    arps_cumulative,
    arps_rate,
    boundary_c1,
    boundary_c2,
    model1_moments,
    model2_moments,
    time_change_tau,
    time_change_tau_inv,
)
from .fpt import (
    DensityCurve,
    FptBounds,
    FptEstimate,
    OrderingReport,
    QuantileEstimate,
    durbin_density,
    durbin_density_at,
    fpt_ig_model2_b0,
    fpt_mc,
    fpt_time_change_model1,
    mean_fpt_bounds,
    stochastic_order_check,
)
from .simulate import (
    NoiseSpec,
    Path,
    PathEnsemble,
    Scheme,
    TimeGrid,
    cumulative_path,
    gaussian_increments,
    simulate_ensemble,
    simulate_path,
    worker_count,
)
from .specfun import (
    DEFAULT_TOLERANCE,
    ConvergenceError,
    InverseGaussian,
    InverseGaussianParams,
    InversionError,
    SeriesTolerance,
    gaver_stehfest_weights,
    hermite_function,
    inverse_gaussian,
    kummer_m,
    laplace_invert,
    ou_fpt_laplace,
    sato_phi1,
)

__version__ = "0.1.0"

__all__ = [
    "EPS_B",
    "ArpsParams",
    "BoundaryValues",
    "ModelKind",
    "MomentSummary",
    "arps_cumulative",
    "arps_rate",
    "boundary_c1",
    "boundary_c2",
    "model1_moments",
    "model2_moments",
    "time_change_tau",
    "time_change_tau_inv",
    "DensityCurve",
    "FptBounds",
    "FptEstimate",
    "OrderingReport",
    "QuantileEstimate",
    "durbin_density",
    "durbin_density_at",
    "fpt_ig_model2_b0",
    "fpt_mc",
    "fpt_time_change_model1",
    "mean_fpt_bounds",
    "stochastic_order_check",
    "NoiseSpec",
    "Path",
    "PathEnsemble",
    "Scheme",
    "TimeGrid",
    "cumulative_path",
    "gaussian_increments",
    "simulate_ensemble",
    "simulate_path",
    "worker_count",
    "DEFAULT_TOLERANCE",
    "ConvergenceError",
    "InverseGaussian",
    "InverseGaussianParams",
    "InversionError",
    "SeriesTolerance",
    "gaver_stehfest_weights",
    "hermite_function",
    "inverse_gaussian",
    "kummer_m",
    "laplace_invert",
    "ou_fpt_laplace",
    "sato_phi1",
    "__version__",
]
