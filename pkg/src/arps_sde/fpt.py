"""First-passage-time machinery for both stochastic decline models.

The Monte Carlo estimators simulate in blocks of steps across chunks of
paths, record the first grid point at or below the target level, and
optionally add the Brownian-bridge crossing correction that removes the
O(sqrt(dt)) bias of pure grid detection.  Censoring at the horizon is
explicit: censored entries carry the horizon value and a flag, means are
computed over uncensored samples only, and quantiles that fall inside the
censored region are reported as lower bounds.

Closed-form results for the linear-volatility model in the exponential
regime (inverse Gaussian law, mean lower bound), the tangent-rule density
approximation for a smooth moving boundary, and the time-change estimator
for the constant-volatility model complete the toolbox, together with an
empirical stochastic-ordering test.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .decline import (
    EPS_B,
    ArpsParams,
    ModelKind,
    arps_rate,
    boundary_c1,
    boundary_c2,
    decay_factor,
    time_change_tau,
    time_change_tau_inv,
)
from .simulate import NoiseSpec, Scheme, TimeGrid, worker_count
from .specfun import InverseGaussianParams, sato_phi1

__all__ = [
    "QuantileEstimate",
    "FptEstimate",
    "DensityCurve",
    "FptBounds",
    "OrderingReport",
    "fpt_mc",
    "fpt_ig_model2_b0",
    "durbin_density",
    "durbin_density_at",
    "mean_fpt_bounds",
    "fpt_time_change_model1",
    "stochastic_order_check",
]

_QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)
_Z95 = 1.959963984540054

_BLOCK_STEPS = 512
_CHUNK_PATHS = 8192


@dataclass(frozen=True)
class QuantileEstimate:
    """One empirical quantile with a distribution-free standard error.

    ``lower_bound`` marks levels that reach into the censored region, where
    only "at least this large" can be said and no standard error is given.
    """

    level: float
    value: float
    stderr: float
    lower_bound: bool


@dataclass(frozen=True)
class FptEstimate:
    """Monte Carlo first-passage results with explicit censoring accounting."""

    samples: np.ndarray
    censored: np.ndarray
    horizon: float
    mean: float
    mean_stderr: float
    variance: float
    quantiles: Tuple[QuantileEstimate, ...]
    n_censored: int
    config: dict

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def censoring_fraction(self) -> float:
        return self.n_censored / max(self.samples.size, 1)

    @property
    def uncensored(self) -> np.ndarray:
        return self.samples[~self.censored]


@dataclass(frozen=True)
class DensityCurve:
    """A density approximation on a grid, with its bookkeeping.

    ``normalization_defect`` is |1 - trapezoidal integral| over the grid;
    ``n_clamped`` counts grid points where a negative raw value was clamped
    to zero.
    """

    grid: TimeGrid
    values: np.ndarray
    normalization_defect: float
    n_clamped: int
    form: str
    config: dict


@dataclass(frozen=True)
class FptBounds:
    """Analytic statements about the mean first-passage time.

    For the linear-volatility model, ``lower_bound`` is the closed-form
    bound 2 log(q0/x) / (2 d0 + sigma^2), valid for every shape parameter.
    For the constant-volatility model the report carries the difference of
    the mean-crossing series at the two arguments in both orientations: the
    oriented difference phi1(x) - phi1(q0) is negative whenever x < q0
    (the series increases in its argument), so its magnitude is reported
    alongside and neither value is asserted to bound anything; compare them
    against Monte Carlo output.
    """

    model: ModelKind
    lower_bound: Optional[float] = None
    series_diff_oriented: Optional[float] = None
    series_diff_magnitude: Optional[float] = None
    note: str = ""


@dataclass(frozen=True)
class OrderingReport:
    """Outcome of the one-sided empirical stochastic-ordering check."""

    statistic: float
    max_violation: float
    critical_value: float
    p_value: float
    ordering_holds: bool
    alpha: float
    n_resamples: int
    mean_a: float
    mean_b: float
    means_ordered: bool


def _simulate_crossings(
    seed: int,
    n_paths: int,
    n_steps: int,
    init: Callable[[int], np.ndarray],
    propagate: Callable[[np.ndarray, int, np.ndarray], Tuple[np.ndarray, np.ndarray]],
    bounds: np.ndarray,
    step_variance: Callable[[np.ndarray, int], np.ndarray],
    bridge: bool,
    block: int = _BLOCK_STEPS,
    chunk: int = _CHUNK_PATHS,
) -> np.ndarray:
    """First crossing step per path (1-based grid index), -1 when censored.

    ``propagate(carry, k0, xi)`` must return the path values at steps
    k0..k0+B (including the left edge, shape (n, B+1)) plus the updated
    carry.  A hit is the first step whose right endpoint is at or below the
    boundary; with ``bridge`` on, an intra-step crossing is additionally
    registered with probability exp(-2 gap_l gap_r / var) when both
    endpoints are above the boundary.  Exact equality at a grid point
    counts as a hit at that point.
    """
    hit_step = np.full(n_paths, -1, dtype=np.int64)

    def run_chunk(lo: int) -> None:
        ids = np.arange(lo, min(lo + chunk, n_paths))
        gens = [NoiseSpec(seed, int(p)).generator() for p in ids]
        augs = [NoiseSpec(seed, int(p)).aux_generator() for p in ids] if bridge else None
        carry = init(ids.size)
        k = 0
        while k < n_steps and ids.size:
            nb = min(block, n_steps - k)
            xi = np.empty((ids.size, nb))
            for i, g in enumerate(gens):
                xi[i] = g.standard_normal(nb)
            vals, carry = propagate(carry, k, xi)
            gap_l = vals[:, :-1] - bounds[k : k + nb]
            gap_r = vals[:, 1:] - bounds[k + 1 : k + nb + 1]
            hit = gap_r <= 0.0
            if bridge:
                uni = np.empty((ids.size, nb))
                for i, g in enumerate(augs):
                    uni[i] = g.uniform(size=nb)
                var = step_variance(vals[:, :-1], k)
                with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
                    prob = np.exp(-2.0 * gap_l * gap_r / var)
                hit |= (gap_l > 0.0) & (gap_r > 0.0) & (uni < prob)
            found = hit.any(axis=1)
            if found.any():
                first = np.argmax(hit, axis=1)
                hit_step[ids[found]] = k + first[found] + 1
                keep = ~found
                ids = ids[keep]
                carry = carry[keep]
                gens = [g for g, flag in zip(gens, keep) if flag]
                if bridge:
                    augs = [g for g, flag in zip(augs, keep) if flag]
            k += nb

    starts = list(range(0, n_paths, chunk))
    workers = min(worker_count(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for lo in starts:
            run_chunk(lo)
    return hit_step


def _quantile_estimates(samples: np.ndarray, censored: np.ndarray, horizon: float) -> tuple:
    n = samples.size
    s = np.sort(samples)
    frac_censored = censored.mean() if n else 0.0
    out = []
    for p in _QUANTILE_LEVELS:
        value = float(np.quantile(s, p))
        half = _Z95 * math.sqrt(n * p * (1.0 - p))
        rank = p * (n - 1)
        ilo = max(0, int(math.floor(rank - half)))
        ihi = min(n - 1, int(math.ceil(rank + half)))
        in_censored_region = frac_censored > 0 and (
            p >= 1.0 - frac_censored or s[ihi] >= horizon
        )
        if in_censored_region:
            out.append(QuantileEstimate(p, min(value, horizon), math.nan, True))
        else:
            stderr = (s[ihi] - s[ilo]) / (2.0 * _Z95)
            out.append(QuantileEstimate(p, value, float(stderr), False))
    return tuple(out)


def _build_estimate(
    samples: np.ndarray, censored: np.ndarray, horizon: float, config: dict
) -> FptEstimate:
    uncensored = samples[~censored]
    if uncensored.size:
        mean = float(uncensored.mean())
        variance = float(uncensored.var(ddof=1)) if uncensored.size > 1 else 0.0
        stderr = math.sqrt(variance / uncensored.size) if uncensored.size > 1 else math.nan
    else:
        mean = variance = stderr = math.nan
    return FptEstimate(
        samples=samples,
        censored=censored,
        horizon=float(horizon),
        mean=mean,
        mean_stderr=stderr,
        variance=variance,
        quantiles=_quantile_estimates(samples, censored, horizon),
        n_censored=int(censored.sum()),
        config=config,
    )


def _degenerate_estimate(n_paths: int, horizon: float, config: dict) -> FptEstimate:
    samples = np.zeros(n_paths)
    censored = np.zeros(n_paths, dtype=bool)
    return _build_estimate(samples, censored, horizon, config)


def fpt_mc(
    params: ArpsParams,
    model: Union[ModelKind, str],
    x: float,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int,
    bridge: bool = True,
    scheme: Union[Scheme, str] = Scheme.EXACT,
) -> FptEstimate:
    """Monte Carlo estimate of the first time the rate process drops to x.

    Paths are stepped on the uniform grid k*dt up to the horizon (rounded up
    to a whole number of steps).  The default scheme steps with the exact
    transition law of the chosen model, so the only discretisation effect is
    intra-step crossings, which the bridge correction accounts for with the
    local volatility frozen at the left endpoint; ``scheme="em"`` uses the
    Euler discretisation instead.  A level at or above q0 is already hit at
    time zero and returns the degenerate all-zeros estimate.
    """
    model = ModelKind(model)
    scheme = Scheme(scheme)
    x = float(x)
    dt = float(dt)
    horizon = float(horizon)
    n_paths = int(n_paths)
    if x <= 0:
        raise ValueError("x must be > 0")
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and > 0")
    if horizon <= 0 or not math.isfinite(horizon):
        raise ValueError("horizon must be finite and > 0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")

    n_steps = int(math.ceil(horizon / dt - 1e-9))
    eff_horizon = n_steps * dt
    config = {
        "estimator": "fpt_mc",
        "params": asdict(params),
        "model": model.value,
        "scheme": scheme.value,
        "x": x,
        "dt": dt,
        "horizon": eff_horizon,
        "n_paths": n_paths,
        "seed": int(seed),
        "bridge": bool(bridge),
    }
    if x >= params.q0:
        return _degenerate_estimate(n_paths, eff_horizon, config)

    pts = np.arange(n_steps + 1) * dt
    sigma, d0, b = params.sigma, params.d0, params.b
    bounds = np.full(n_steps + 1, x)

    if scheme is Scheme.EXACT and model is ModelKind.CONSTANT_VOL:
        decay = np.asarray(decay_factor(params, pts))
        scale = sigma * np.sqrt(np.diff(np.asarray(time_change_tau(params, pts))))

        def init(n: int) -> np.ndarray:
            return np.full(n, params.q0)

        def propagate(carry, k0, xi):
            nb = xi.shape[1]
            vals = np.empty((carry.size, nb + 1))
            vals[:, 0] = carry * decay[k0]
            walked = carry[:, None] + np.cumsum(scale[k0 : k0 + nb] * xi, axis=1)
            vals[:, 1:] = walked * decay[k0 + 1 : k0 + nb + 1]
            return vals, walked[:, -1]

        def step_variance(left, k0):
            return sigma * sigma * dt

    elif scheme is Scheme.EXACT and model is ModelKind.LINEAR_VOL:
        log_rate = np.log(np.asarray(arps_rate(params, pts)))
        ldet = np.diff(log_rate) - 0.5 * params.sigma2 * dt
        sq = sigma * math.sqrt(dt)

        def init(n: int) -> np.ndarray:
            return np.full(n, math.log(params.q0))

        def propagate(carry, k0, xi):
            nb = xi.shape[1]
            vals = np.empty((carry.size, nb + 1))
            vals[:, 0] = np.exp(carry)
            logs = carry[:, None] + np.cumsum(ldet[k0 : k0 + nb] + sq * xi, axis=1)
            vals[:, 1:] = np.exp(logs)
            return vals, logs[:, -1]

        def step_variance(left, k0):
            return (sigma * left) ** 2 * dt

    else:
        linear = model is ModelKind.LINEAR_VOL
        sqrt_dt = math.sqrt(dt)

        def init(n: int) -> np.ndarray:
            return np.full(n, params.q0)

        def propagate(carry, k0, xi):
            nb = xi.shape[1]
            vals = np.empty((carry.size, nb + 1))
            vals[:, 0] = carry
            q = carry
            for j in range(nb):
                drift = -d0 * q / (1.0 + b * d0 * pts[k0 + j])
                alpha = sigma * q if linear else sigma
                q = q + drift * dt + alpha * sqrt_dt * xi[:, j]
                vals[:, j + 1] = q
            return vals, q

        if linear:

            def step_variance(left, k0):
                return (sigma * left) ** 2 * dt

        else:

            def step_variance(left, k0):
                return sigma * sigma * dt

    hit_step = _simulate_crossings(
        int(seed), n_paths, n_steps, init, propagate, bounds, step_variance, bridge
    )
    censored = hit_step < 0
    samples = np.where(censored, eff_horizon, hit_step.astype(float) * dt)
    return _build_estimate(samples, censored, eff_horizon, config)


def fpt_time_change_model1(
    params: ArpsParams,
    x: float,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int,
) -> FptEstimate:
    """Constant-volatility crossing times via the Brownian-clock representation.

    A standard Brownian motion is simulated on the uniform grid k*dt in the
    transformed clock (``dt`` is the step of that clock, not ordinary time),
    its first passage below the moving boundary of ``boundary_c1`` is
    detected with a per-step linear-bridge correction, and the crossing
    clock reading is mapped back through ``time_change_tau_inv``.  Censoring
    happens at the clock reading of the requested horizon.
    """
    x = float(x)
    dt = float(dt)
    horizon = float(horizon)
    n_paths = int(n_paths)
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and > 0")
    if horizon <= 0 or not math.isfinite(horizon):
        raise ValueError("horizon must be finite and > 0")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if x <= 0:
        raise ValueError("x must be > 0")
    config = {
        "estimator": "fpt_time_change_model1",
        "params": asdict(params),
        "model": ModelKind.CONSTANT_VOL.value,
        "x": x,
        "dt": dt,
        "horizon": horizon,
        "n_paths": n_paths,
        "seed": int(seed),
        "bridge": True,
        "clock": "tau",
    }
    if x >= params.q0:
        return _degenerate_estimate(n_paths, horizon, config)

    clock_end = float(time_change_tau(params, horizon))
    n_steps = int(math.ceil(clock_end / dt - 1e-9))
    r_pts = np.arange(n_steps + 1) * dt
    bounds = np.asarray(boundary_c1(params, x, r_pts))

    def init(n: int) -> np.ndarray:
        return np.zeros(n)

    sqrt_dt = math.sqrt(dt)

    def propagate(carry, k0, xi):
        nb = xi.shape[1]
        vals = np.empty((carry.size, nb + 1))
        vals[:, 0] = carry
        walked = carry[:, None] + np.cumsum(sqrt_dt * xi, axis=1)
        vals[:, 1:] = walked
        return vals, walked[:, -1]

    def step_variance(left, k0):
        return dt

    hit_step = _simulate_crossings(
        int(seed), n_paths, n_steps, init, propagate, bounds, step_variance, bridge=True
    )
    censored = hit_step < 0
    clock_hits = np.where(censored, 0.0, hit_step.astype(float) * dt)
    times = np.asarray(time_change_tau_inv(params, clock_hits))
    censored = censored | (times > horizon)
    samples = np.where(censored, horizon, times)
    return _build_estimate(samples, censored, horizon, config)


def fpt_ig_model2_b0(params: ArpsParams, x: float) -> InverseGaussianParams:
    """Exact inverse Gaussian law of the linear-volatility crossing time at b = 0.

    m = 2 log(q0/x) / (2 d0 + sigma^2) and lambda = (log(q0/x) / sigma)^2.
    Only valid in the exponential regime, where the boundary seen by the
    driving Brownian motion is exactly linear.
    """
    if params.b > EPS_B:
        raise ValueError("closed form only valid in the exponential regime (b <= EPS_B)")
    if params.sigma <= 0:
        raise ValueError("sigma must be > 0")
    x = float(x)
    if not (0.0 < x < params.q0):
        raise ValueError(f"level x must satisfy 0 < x < q0, got {x}")
    log_ratio = math.log(params.q0 / x)
    m = 2.0 * log_ratio / (2.0 * params.d0 + params.sigma2)
    lam = (log_ratio / params.sigma) ** 2
    return InverseGaussianParams(m=m, lam=lam)


def _d_term(params: ArpsParams, t: np.ndarray) -> np.ndarray:
    if params.exponential:
        return params.d0 / params.sigma + 0.0 * t
    return params.d0 / (params.sigma * (1.0 + params.b * params.d0 * t))


def durbin_density_at(params: ArpsParams, x: float, t, form: str = "corrected"):
    """Tangent-rule approximation of the crossing-time density, pointwise.

    The density of the first passage of a Brownian motion through the smooth
    boundary c2 is approximated by p(t) f(t) with f the Gaussian factor
    exp(-c2(t)^2 / (2t)) / sqrt(2 pi t).  ``form="corrected"`` uses the
    tangent rule p = c2'(t) - c2(t)/t, which is exact when the boundary is
    linear (b = 0); ``form="as_printed"`` flips the sign of the derivative
    contribution d0 / (sigma (1 + b d0 t)) and is kept for side-by-side
    comparison.  Values at t = 0 are 0 by continuity; negative values are
    clamped by the curve builder, not here.
    """
    if form not in ("corrected", "as_printed"):
        raise ValueError(f"form must be 'corrected' or 'as_printed', got {form!r}")
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    level, slope, _ = boundary_c2(params, x, tp)
    level = np.atleast_1d(level)
    slope = np.atleast_1d(slope)
    p = slope - level / tp
    if form == "as_printed":
        p = p - 2.0 * _d_term(params, tp)
    gauss = np.exp(-level * level / (2.0 * tp)) / np.sqrt(2.0 * np.pi * tp)
    out[pos] = p * gauss
    return float(out[0]) if scalar else out


def durbin_density(
    params: ArpsParams, x: float, grid: TimeGrid, form: str = "corrected"
) -> DensityCurve:
    """Density approximation on a grid, clamped to be nonnegative.

    Negative raw values (which the tangent rule can produce far in the tail)
    are clamped to zero and counted; the trapezoidal normalization defect
    over the grid is reported, since the approximation integrates to exactly
    1 only when the boundary is linear.
    """
    raw = np.asarray(durbin_density_at(params, x, grid.points, form=form))
    negative = raw < 0.0
    values = np.where(negative, 0.0, raw)
    defect = abs(1.0 - float(np.trapezoid(values, grid.points)))
    config = {"params": asdict(params), "x": float(x), "form": form}
    return DensityCurve(
        grid=grid,
        values=values,
        normalization_defect=defect,
        n_clamped=int(negative.sum()),
        form=form,
        config=config,
    )


def mean_fpt_bounds(params: ArpsParams, x: float, model: Union[ModelKind, str]) -> FptBounds:
    """Analytic mean-crossing-time statements for the chosen model.

    See ``FptBounds`` for exactly what each field asserts (and carefully
    does not assert).
    """
    model = ModelKind(model)
    x = float(x)
    if not (0.0 < x < params.q0):
        raise ValueError(f"level x must satisfy 0 < x < q0, got {x}")
    if model is ModelKind.LINEAR_VOL:
        bound = 2.0 * math.log(params.q0 / x) / (2.0 * params.d0 + params.sigma2)
        return FptBounds(
            model=model,
            lower_bound=bound,
            note=(
                "lower bound on the mean crossing time, valid for every shape "
                "parameter; tends to the deterministic exponential crossing "
                "time log(q0/x)/d0 as sigma -> 0"
            ),
        )
    if params.sigma <= 0:
        raise ValueError("sigma must be > 0 for the constant-volatility series")
    phi_x = sato_phi1(params.d0, params.sigma, x)
    phi_q0 = sato_phi1(params.d0, params.sigma, params.q0)
    return FptBounds(
        model=model,
        series_diff_oriented=phi_x - phi_q0,
        series_diff_magnitude=abs(phi_q0 - phi_x),
        note=(
            "difference of the mean-crossing series at the level and at the "
            "start; the oriented difference is negative whenever x < q0 "
            "because the series increases in its argument, so both "
            "orientations are reported and neither is asserted as a bound; "
            "compare against Monte Carlo estimates"
        ),
    )


def stochastic_order_check(
    samples_a,
    samples_b,
    alpha: float = 0.01,
    *,
    n_resamples: int = 200,
    seed: int = 0,
) -> OrderingReport:
    """Test the one-sided ordering "a is stochastically smaller than b".

    The statistic is the largest excess of the empirical survival of ``a``
    over that of ``b`` on the merged sample grid (zero when the ordering
    holds everywhere empirically).  Its null distribution is calibrated by
    ``n_resamples`` label permutations of the pooled sample, and the
    ordering is accepted when the observed statistic does not exceed the
    permutation (1 - alpha) quantile.  The report also carries the plain
    comparison of sample means, which the ordering implies.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")

    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    sorted_vals = pooled[order]
    # Survival gap S_a - S_b equals F_b - F_a; accumulate +1/m per b-sample
    # and -1/n per a-sample, evaluating only at the last index of each tie
    # group.
    weights = np.concatenate([np.full(a.size, -1.0 / a.size), np.full(b.size, 1.0 / b.size)])
    group_end = np.empty(pooled.size, dtype=bool)
    group_end[:-1] = sorted_vals[:-1] != sorted_vals[1:]
    group_end[-1] = True

    base_weights = weights[order]

    def statistic(w: np.ndarray) -> float:
        gaps = np.cumsum(w)[group_end]
        return float(np.max(gaps))

    observed = statistic(base_weights)
    rng = np.random.default_rng(seed)
    perm_stats = np.empty(n_resamples)
    for i in range(n_resamples):
        perm_stats[i] = statistic(rng.permutation(base_weights))
    critical = float(np.quantile(perm_stats, 1.0 - alpha))
    p_value = float((1 + np.sum(perm_stats >= observed)) / (1 + n_resamples))
    mean_a = float(a.mean())
    mean_b = float(b.mean())
    return OrderingReport(
        statistic=observed,
        max_violation=max(observed, 0.0),
        critical_value=critical,
        p_value=p_value,
        ordering_holds=bool(observed <= critical),
        alpha=alpha,
        n_resamples=int(n_resamples),
        mean_a=mean_a,
        mean_b=mean_b,
        means_ordered=bool(mean_a <= mean_b),
    )
