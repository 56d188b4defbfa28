"""Reproducible path simulation for both stochastic decline models.

Noise is organised as counter-based streams: a 64-bit seed plus a stream
index key a Philox generator, so every (seed, stream) pair yields the same
draws no matter how work is split across workers.  Path i of an ensemble
always reads stream i, and all schemes consume exactly one standard normal
per (path, step), which makes common-random-number comparisons across
parameter values line up draw by draw.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from .decline import ArpsParams, ModelKind, arps_rate, decay_factor, time_change_tau

__all__ = [
    "NoiseSpec",
    "TimeGrid",
    "Path",
    "PathEnsemble",
    "Scheme",
    "gaussian_increments",
    "simulate_path",
    "simulate_ensemble",
    "cumulative_path",
    "worker_count",
]

_MASK64 = (1 << 64) - 1
#: Top bit of the stream word is reserved for auxiliary (uniform) draws so
#: that bridge-correction uniforms never share a stream with the normals.
_AUX_BIT = 1 << 63

#: Paths per work chunk.  Fixed (never derived from the worker count) so the
#: chunk layout, and therefore every float, is identical however many
#: workers run.
_CHUNK_PATHS = 8192


class Scheme(enum.Enum):
    """Time-stepping scheme for path simulation."""

    EULER = "em"
    EXACT = "exact"


@dataclass(frozen=True)
class NoiseSpec:
    """Addressable noise stream: (seed, stream) fully determine the draws."""

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer")
        if not isinstance(self.stream, (int, np.integer)) or self.stream < 0:
            raise ValueError("stream must be a nonnegative integer")
        if self.stream >= _AUX_BIT:
            raise ValueError("stream index must be below 2**63")

    def _key(self, aux: bool) -> np.ndarray:
        stream = self.stream | _AUX_BIT if aux else self.stream
        return np.array([self.seed & _MASK64, stream], dtype=np.uint64)

    def generator(self) -> np.random.Generator:
        """Generator for the primary (standard normal) draws of this stream."""
        return np.random.Generator(np.random.Philox(key=self._key(False)))

    def aux_generator(self) -> np.random.Generator:
        """Independent generator for auxiliary uniforms (bridge corrections)."""
        return np.random.Generator(np.random.Philox(key=self._key(True)))


def gaussian_increments(spec: NoiseSpec, n: int) -> np.ndarray:
    """The first n standard normal draws of the given stream."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    return spec.generator().standard_normal(n)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points starting at 0."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("grid must be a one-dimensional, nonempty sequence")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if pts[0] != 0.0:
            raise ValueError("grid must start at 0")
        if pts.size > 1 and not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, dt: float, horizon: float) -> "TimeGrid":
        """Uniform grid 0, dt, 2 dt, ... covering [0, horizon]."""
        dt = float(dt)
        horizon = float(horizon)
        if dt <= 0 or horizon <= 0:
            raise ValueError("dt and horizon must be > 0")
        n = int(math.ceil(horizon / dt - 1e-9))
        return cls(np.arange(n + 1) * dt)

    @property
    def n_points(self) -> int:
        return self.points.size

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def horizon(self) -> float:
        return float(self.points[-1])


@dataclass(frozen=True)
class Path:
    """One sample trajectory on a time grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.points.shape:
            raise ValueError("values and grid lengths must match")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class PathEnsemble:
    """A stack of paths with per-time summary moments and its generating config.

    ``mean`` and ``variance`` (sample variance, ddof=1) are plain reductions
    of ``values`` and can be recomputed bit-exactly with
    ``recompute_summary``.  ``em_nonpositive`` counts paths that touched or
    crossed zero, a diagnostic for the Euler scheme on the linear-volatility
    model whose exact paths are positive by construction.
    """

    grid: TimeGrid
    values: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    params: ArpsParams
    model: ModelKind
    scheme: Scheme
    seed: int
    em_nonpositive: int = 0

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def path(self, i: int) -> Path:
        return Path(self.grid, self.values[i])

    def recompute_summary(self) -> tuple:
        return _summarize(self.values)


def _summarize(values: np.ndarray) -> tuple:
    mean = values.mean(axis=0)
    if values.shape[0] > 1:
        variance = values.var(axis=0, ddof=1)
    else:
        variance = np.full(values.shape[1], np.nan)
    return mean, variance


def worker_count() -> int:
    """Worker cap from ARPS_SDE_THREADS (speed only; results never change)."""
    raw = os.environ.get("ARPS_SDE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def _normals_for_paths(seed: int, paths: range, n: int) -> np.ndarray:
    out = np.empty((len(paths), n))
    for i, p in enumerate(paths):
        out[i] = NoiseSpec(seed, p).generator().standard_normal(n)
    return out


def _em_values(params: ArpsParams, model: ModelKind, grid: TimeGrid, xi: np.ndarray) -> np.ndarray:
    pts = grid.points
    dts = grid.steps
    n = xi.shape[0]
    vals = np.empty((n, pts.size))
    q = np.full(n, params.q0)
    vals[:, 0] = q
    linear = model is ModelKind.LINEAR_VOL
    for i, dt in enumerate(dts):
        drift = -params.d0 * q / (1.0 + params.b * params.d0 * pts[i])
        alpha = params.sigma * q if linear else params.sigma
        q = q + drift * dt + alpha * math.sqrt(dt) * xi[:, i]
        vals[:, i + 1] = q
    return vals


def _exact_constant_values(params: ArpsParams, grid: TimeGrid, xi: np.ndarray) -> np.ndarray:
    # The auxiliary martingale X = Q / decay has independent Gaussian
    # increments with variance sigma^2 * (tau(t_{ i+1}) - tau(t_i)), so the
    # sampled marginal law is exact at every grid point.
    tau = np.asarray(time_change_tau(params, grid.points))
    scale = params.sigma * np.sqrt(np.diff(tau))
    x = np.empty((xi.shape[0], grid.n_points))
    x[:, 0] = params.q0
    np.cumsum(scale * xi, axis=1, out=x[:, 1:])
    x[:, 1:] += params.q0
    return x * np.asarray(decay_factor(params, grid.points))


def _exact_linear_values(params: ArpsParams, grid: TimeGrid, xi: np.ndarray) -> np.ndarray:
    pts = grid.points
    bm = np.empty((xi.shape[0], pts.size))
    bm[:, 0] = 0.0
    np.cumsum(np.sqrt(grid.steps) * xi, axis=1, out=bm[:, 1:])
    rate = np.asarray(arps_rate(params, pts))
    return rate * np.exp(params.sigma * bm - 0.5 * params.sigma2 * pts)


def _kernel(params: ArpsParams, model: ModelKind, scheme: Scheme):
    if scheme is Scheme.EULER:
        return lambda xi, grid: _em_values(params, model, grid, xi)
    if model is ModelKind.CONSTANT_VOL:
        return lambda xi, grid: _exact_constant_values(params, grid, xi)
    return lambda xi, grid: _exact_linear_values(params, grid, xi)


def simulate_path(
    params: ArpsParams,
    model: Union[ModelKind, str],
    scheme: Union[Scheme, str],
    grid: TimeGrid,
    noise: NoiseSpec,
) -> Path:
    """Simulate one trajectory of the chosen model.

    The Euler scheme discretises the defining equation directly,
    Q_{i+1} = Q_i - d0 Q_i / (1 + b d0 t_i) * dt + alpha(Q_i) sqrt(dt) xi_i.
    The exact scheme draws from the closed-form solution instead: for
    constant volatility through the independent increments of the auxiliary
    martingale (exact marginal law at every grid point), for linear
    volatility through exact Brownian increments in the exponent.  Reusing a
    NoiseSpec across parameter values replays identical draws per step.
    """
    model = ModelKind(model)
    scheme = Scheme(scheme)
    xi = gaussian_increments(noise, grid.n_steps).reshape(1, -1)
    values = _kernel(params, model, scheme)(xi, grid)
    return Path(grid, values[0])


def simulate_ensemble(
    params: ArpsParams,
    model: Union[ModelKind, str],
    scheme: Union[Scheme, str],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
) -> PathEnsemble:
    """Simulate n_paths trajectories, path i reading noise stream i.

    Work is split into fixed-size chunks handled by up to ``worker_count()``
    threads; because every path owns its stream and chunk boundaries are
    fixed, the result is bit-identical for any worker count.
    """
    model = ModelKind(model)
    scheme = Scheme(scheme)
    n_paths = int(n_paths)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    kernel = _kernel(params, model, scheme)
    values = np.empty((n_paths, grid.n_points))
    chunks = [range(lo, min(lo + _CHUNK_PATHS, n_paths)) for lo in range(0, n_paths, _CHUNK_PATHS)]

    def run(chunk: range) -> None:
        xi = _normals_for_paths(seed, chunk, grid.n_steps)
        values[chunk.start : chunk.stop] = kernel(xi, grid)

    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    else:
        for chunk in chunks:
            run(chunk)

    mean, variance = _summarize(values)
    nonpositive = 0
    if scheme is Scheme.EULER and model is ModelKind.LINEAR_VOL:
        nonpositive = int(np.sum(np.any(values <= 0.0, axis=1)))
    return PathEnsemble(
        grid=grid,
        values=values,
        mean=mean,
        variance=variance,
        params=params,
        model=model,
        scheme=scheme,
        seed=int(seed),
        em_nonpositive=nonpositive,
    )


def cumulative_path(path: Path) -> Path:
    """Trapezoidal cumulative integral of a path on its own grid."""
    v = path.values
    t = path.grid.points
    out = np.empty_like(v)
    out[0] = 0.0
    np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t), out=out[1:])
    return Path(path.grid, out)
