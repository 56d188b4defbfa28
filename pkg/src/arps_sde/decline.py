"""Closed-form building blocks of the stochastic decline models.

Everything in this module is a pure function of the parameter bundle: the
deterministic decline curve and its antiderivative, exact first and second
moments of both diffusions, the deterministic clock that turns the
constant-volatility model into a standard Brownian motion, and the moving
boundaries that recast level crossings of the rate process as boundary
crossings of that Brownian motion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

__all__ = [
    "EPS_B",
    "ArpsParams",
    "ModelKind",
    "MomentSummary",
    "BoundaryValues",
    "arps_rate",
    "arps_cumulative",
    "model1_moments",
    "model2_moments",
    "time_change_tau",
    "time_change_tau_inv",
    "boundary_c1",
    "boundary_c2",
]

#: Shape parameters at or below this threshold are routed to the analytic
#: b -> 0 (exponential decline) limits of every formula.  Powers of the form
#: (1 + b*d0*t)**(1/b) lose all precision well before b reaches the 1e-15
#: scale, so the switch happens at a comfortably safe value.
EPS_B = 1e-6

ArrayOrFloat = Union[float, np.ndarray]


class ModelKind(enum.Enum):
    """Which noise structure drives the stochastic decline."""

    CONSTANT_VOL = "const-vol"
    LINEAR_VOL = "linear-vol"


@dataclass(frozen=True)
class ArpsParams:
    """Parameter bundle shared by every formula in the library.

    Attributes
    ----------
    q0 : float
        Initial production rate (volume per unit time), strictly positive.
    d0 : float
        Initial decline rate (1 / time), strictly positive.
    b : float
        Dimensionless shape parameter in [0, 1].  b = 0 is exponential
        decline, b = 1 harmonic, anything between is hyperbolic.  Values at
        or below ``EPS_B`` select the exponential-limit formulas.
    sigma : float
        Volatility, nonnegative.  Units depend on the model: rate per
        sqrt(time) for the constant-volatility model, 1 per sqrt(time) for
        the linear-volatility model.
    """

    q0: float
    d0: float
    b: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("q0", "d0", "b", "sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.q0) and self.q0 > 0):
            raise ValueError(f"q0 must be finite and > 0, got {self.q0}")
        if not (math.isfinite(self.d0) and self.d0 > 0):
            raise ValueError(f"d0 must be finite and > 0, got {self.d0}")
        if not (0.0 <= self.b <= 1.0):
            raise ValueError(f"b must lie in [0, 1], got {self.b}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")

    @property
    def exponential(self) -> bool:
        """True when the shape parameter routes to the b -> 0 limits."""
        return self.b <= EPS_B

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma


@dataclass(frozen=True)
class MomentSummary:
    """Exact moments of the rate process at one time (or one pair of times).

    ``covariance`` is populated only when a second time was supplied;
    ``lognormal_location`` / ``lognormal_scale2`` only for the
    linear-volatility model, where log Q_t is Gaussian with that location
    and variance.
    """

    mean: float
    variance: float
    covariance: Optional[float] = None
    lognormal_location: Optional[float] = None
    lognormal_scale2: Optional[float] = None


class BoundaryValues(NamedTuple):
    """A moving boundary evaluated at one or more times."""

    level: ArrayOrFloat
    slope: ArrayOrFloat
    linear_bound: ArrayOrFloat


def _as_time(t, name: str = "t") -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0")
    return arr


def _ret(value: np.ndarray) -> ArrayOrFloat:
    return float(value) if value.ndim == 0 else value


def decay_factor(params: ArpsParams, t) -> ArrayOrFloat:
    """q(t) / q0, the dimensionless deterministic decline factor."""
    t = _as_time(t)
    if params.exponential:
        return _ret(np.exp(-params.d0 * t))
    return _ret(np.exp(-np.log1p(params.b * params.d0 * t) / params.b))


def arps_rate(params: ArpsParams, t) -> ArrayOrFloat:
    """Deterministic production rate q(t) = q0 (1 + b d0 t)^(-1/b).

    Falls back to the exponential form q0 exp(-d0 t) when b is at or below
    ``EPS_B``.  Strictly decreasing in t and nondecreasing in b.
    """
    return params.q0 * decay_factor(params, t)


def arps_cumulative(params: ArpsParams, t) -> ArrayOrFloat:
    """Cumulative production: the integral of ``arps_rate`` from 0 to t."""
    t = _as_time(t)
    q0, d0, b = params.q0, params.d0, params.b
    if params.exponential:
        out = q0 * (-np.expm1(-d0 * t)) / d0
    elif abs(b - 1.0) < 1e-12:
        out = q0 * np.log1p(d0 * t) / d0
    else:
        out = q0 * np.expm1((1.0 - 1.0 / b) * np.log1p(b * d0 * t)) / (d0 * (b - 1.0))
    return _ret(out)


def _variance_model1(params: ArpsParams, t: np.ndarray) -> np.ndarray:
    s2, d0, b = params.sigma2, params.d0, params.b
    if params.exponential:
        return s2 * (-np.expm1(-2.0 * d0 * t)) / (2.0 * d0)
    u = np.log1p(b * d0 * t)
    return s2 * np.exp(u) / (d0 * (2.0 + b)) * (-np.expm1(-(2.0 / b + 1.0) * u))


def model1_moments(params: ArpsParams, t, s=None) -> MomentSummary:
    """Mean, variance and (optionally) covariance of the constant-volatility model.

    The process is Gaussian: its mean is the deterministic curve and its
    variance follows from the Ito isometry.  When ``s`` is given, the
    covariance between the values at ``s`` and ``t`` is included; the formula
    is symmetric in its two times, so the order of ``s`` and ``t`` does not
    matter.
    """
    t_arr = _as_time(t)
    if t_arr.ndim != 0:
        raise ValueError("model1_moments expects scalar times")
    mean = params.q0 * decay_factor(params, t_arr)
    variance = float(_variance_model1(params, t_arr))
    covariance = None
    if s is not None:
        s_arr = _as_time(s, "s")
        if s_arr.ndim != 0:
            raise ValueError("model1_moments expects scalar times")
        lo = min(float(s_arr), float(t_arr))
        covariance = float(
            params.sigma2
            * decay_factor(params, s_arr)
            * decay_factor(params, t_arr)
            * time_change_tau(params, lo)
        )
    return MomentSummary(mean=float(mean), variance=variance, covariance=covariance)


def model2_moments(params: ArpsParams, t) -> MomentSummary:
    """Moments of the linear-volatility model, whose marginals are lognormal.

    log Q_t is Gaussian with location log q(t) - sigma^2 t / 2 and variance
    sigma^2 t; the mean of Q_t itself is again the deterministic curve.
    """
    t_arr = _as_time(t)
    if t_arr.ndim != 0:
        raise ValueError("model2_moments expects a scalar time")
    tf = float(t_arr)
    decay = float(decay_factor(params, tf))
    mean = params.q0 * decay
    s2t = params.sigma2 * tf
    variance = (params.q0 * decay) ** 2 * float(np.expm1(s2t))
    location = math.log(params.q0) + math.log(decay) - 0.5 * s2t if decay > 0 else -math.inf
    return MomentSummary(
        mean=mean,
        variance=variance,
        lognormal_location=location,
        lognormal_scale2=s2t,
    )


def time_change_tau(params: ArpsParams, t) -> ArrayOrFloat:
    """Deterministic clock tau(t) under which the driving martingale is Brownian.

    tau equals the accumulated variance of the Wiener integral in the exact
    solution of the constant-volatility model (with sigma scaled out):
    tau(t) = [(1 + b d0 t)^((b+2)/b) - 1] / (d0 (b+2)), with the b -> 0 limit
    (exp(2 d0 t) - 1) / (2 d0).  Strictly increasing with tau(0) = 0.
    """
    t = _as_time(t)
    d0, b = params.d0, params.b
    if params.exponential:
        out = np.expm1(2.0 * d0 * t) / (2.0 * d0)
    else:
        out = np.expm1((b + 2.0) / b * np.log1p(b * d0 * t)) / (d0 * (b + 2.0))
    return _ret(out)


def time_change_tau_inv(params: ArpsParams, r) -> ArrayOrFloat:
    """Inverse of ``time_change_tau``: the ordinary time at clock reading r."""
    r = _as_time(r, "r")
    d0, b = params.d0, params.b
    if params.exponential:
        out = np.log1p(2.0 * d0 * r) / (2.0 * d0)
    else:
        out = np.expm1(b / (b + 2.0) * np.log1p(r * (b + 2.0) * d0)) / (b * d0)
    return _ret(out)


def _check_level(params: ArpsParams, x: float) -> float:
    x = float(x)
    if not (0.0 < x < params.q0):
        raise ValueError(f"level x must satisfy 0 < x < q0, got x={x}, q0={params.q0}")
    if params.sigma <= 0.0:
        raise ValueError("boundary formulas require sigma > 0")
    return x


def boundary_c1(params: ArpsParams, x, t) -> ArrayOrFloat:
    """Moving boundary whose crossing by the time-changed Brownian motion is
    the level-x crossing of the constant-volatility model.

    c1(t) = [x (1 + d0 (b+2) t)^(1/(b+2)) - q0] / sigma; at b = 0 this is the
    square-root boundary [x sqrt(1 + 2 d0 t) - q0] / sigma.  c1(0) < 0 and
    c1 increases without bound.
    """
    x = _check_level(params, x)
    t = _as_time(t)
    d0, b = params.d0, params.b
    if params.exponential:
        grown = x * np.sqrt(1.0 + 2.0 * d0 * t)
    else:
        grown = x * np.exp(np.log1p(d0 * (b + 2.0) * t) / (b + 2.0))
    return _ret((grown - params.q0) / params.sigma)


def boundary_c2(params: ArpsParams, x, t) -> BoundaryValues:
    """Boundary for the linear-volatility model, with slope and linear bound.

    Returns c2(t) = sigma t / 2 + log(x/q0)/sigma + log(1 + b d0 t)/(b sigma),
    its derivative, and the linear majorant obtained from log(1+u) <= u,
    which coincides with c2 exactly when b = 0.
    """
    x = _check_level(params, x)
    t = _as_time(t)
    sig, d0, b = params.sigma, params.d0, params.b
    intercept = math.log(x / params.q0) / sig
    if params.exponential:
        level = 0.5 * sig * t + intercept + d0 * t / sig
        slope = (0.5 * sig + d0 / sig) + 0.0 * t
    else:
        level = 0.5 * sig * t + intercept + np.log1p(b * d0 * t) / (b * sig)
        slope = 0.5 * sig + d0 / (sig * (1.0 + b * d0 * t))
    linear = intercept + (0.5 * sig + d0 / sig) * t
    if t.ndim == 0:
        return BoundaryValues(float(level), float(slope), float(linear))
    return BoundaryValues(np.asarray(level), np.asarray(slope), np.asarray(linear))
