"""Euler-Maruyama simulation of Nelson diffusions and path functionals.

Every path owns a Philox stream keyed by ``(seed, path index)``.  The
initial point and all increments of path ``i`` come from that stream alone,
so ensembles are bit-identical whatever the chunking or thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import core
from .core import Grid, SampleSet, ScalarField
from .errors import DomainEscape, ValidationError

CHUNK = 512
ESCAPE_LIMIT = 1e-3


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("GPCHAOS_THREADS", "1")))
    except ValueError:
        return 1


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for one path."""
    return np.random.Generator(np.random.Philox(key=(int(seed) % 2**64) + (int(index) << 64)))


@dataclass(frozen=True)
class SimParams:
    dt: float
    T: float
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError("dt must be positive", "dt")
        if not self.T > 0 or self.dt > self.T:
            raise ValidationError("need 0 < dt <= T", "T")
        if abs(self.T / self.dt - round(self.T / self.dt)) > 1e-9 * self.T / self.dt:
            raise ValidationError("T must be an integer multiple of dt", "T")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be positive", "n_paths")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


class GridDrift:
    """Vector field sampled on a grid, evaluated by multilinear interpolation."""

    def __init__(self, values: np.ndarray, grid: Grid):
        self.values = np.asarray(values, dtype=float)
        self.grid = grid
        if self.values.shape != (grid.dim,) + grid.shape:
            raise ValidationError("drift must have shape (dim, *grid.shape)", "drift")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return core.interpolate(self.values, self.grid, x).T


class ProductDrift:
    """Apply a one-particle drift to each of N particle blocks."""

    def __init__(self, one: Callable, N: int, d: int):
        self.one, self.N, self.d = one, N, d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for i in range(self.N):
            blk = slice(i * self.d, (i + 1) * self.d)
            out[:, blk] = self.one(x[:, blk])
        return out


def zero_drift(x):
    return np.zeros_like(x)


def ou_drift(rate: float = 1.0) -> Callable:
    return lambda x: -rate * x


@dataclass
class PathEnsemble:
    times: np.ndarray
    positions: np.ndarray        # (n_paths, n_steps + 1, dim)
    drift_samples: np.ndarray    # drift evaluated at positions, same shape
    params: SimParams
    escapes: int = 0
    box: float = math.inf

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def step_index(self, t: float) -> int:
        k = int(round(t / self.params.dt))
        if not 0 <= k <= self.params.n_steps:
            raise ValidationError(f"time {t} outside [0, T]", "t")
        return k


def _initial_points(initial, idx: np.ndarray, seed: int, dim: int | None):
    rngs = [path_rng(seed, i) for i in idx]
    if isinstance(initial, ScalarField):
        return core.sample_density(initial, rngs), rngs
    pts = initial.points if isinstance(initial, SampleSet) else np.atleast_2d(
        np.asarray(initial, dtype=float))
    if pts.shape[0] == 1:
        return np.repeat(pts, len(idx), axis=0), rngs
    return pts[idx].copy(), rngs


def _reflect(x: np.ndarray, box: float) -> int:
    if not math.isfinite(box):
        return 0
    out = np.abs(x) > box
    count = int(out.sum())
    if count:
        x[x > box] = 2 * box - x[x > box]
        x[x < -box] = -2 * box - x[x < -box]
        np.clip(x, -box, box, out=x)
    return count


def simulate(drift: Callable | GridDrift, initial, params: SimParams,
             box: float | None = None, escape_limit: float = ESCAPE_LIMIT,
             threads: int | None = None) -> PathEnsemble:
    """Euler-Maruyama ``X += b(X) dt + sqrt(dt) xi`` with unit noise.

    ``initial`` is a density field (sampled exactly from its interpolant),
    a :class:`SampleSet` / array with one row per path, or a single point.
    Coordinates leaving ``[-box, box]`` are reflected; if more than
    ``escape_limit`` of all coordinate updates needed reflection the run
    fails with :class:`DomainEscape`.
    """
    if box is None:
        box = initial.grid.extent if isinstance(initial, ScalarField) else (
            drift.grid.extent if isinstance(drift, GridDrift) else math.inf)
    n, ns, dt = params.n_paths, params.n_steps, params.dt
    probe, _ = _initial_points(initial, np.arange(1), params.seed, None)
    dim = probe.shape[1]
    positions = np.empty((n, ns + 1, dim))
    drifts = np.empty((n, ns + 1, dim))
    sq = math.sqrt(dt)

    def run_chunk(start):
        idx = np.arange(start, min(start + CHUNK, n))
        x, rngs = _initial_points(initial, idx, params.seed, dim)
        noise = np.stack([r.standard_normal((ns, dim)) for r in rngs], axis=1)
        esc = 0
        for k in range(ns):
            b = drift(x)
            positions[idx, k] = x
            drifts[idx, k] = b
            x = x + b * dt + sq * noise[k]
            esc += _reflect(x, box)
        positions[idx, ns] = x
        drifts[idx, ns] = drift(x)
        return esc

    starts = range(0, n, CHUNK)
    workers = threads or thread_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            escapes = sum(ex.map(run_chunk, starts))
    else:
        escapes = sum(map(run_chunk, starts))
    if escapes > escape_limit * n * ns * dim:
        raise DomainEscape(f"{escapes} reflections in {n * ns * dim} coordinate updates")
    return PathEnsemble(dt * np.arange(ns + 1), positions, drifts, params, escapes, box)


# --------------------------------------------------------------------------
# stopping times


@dataclass
class StoppingRecord:
    tau: np.ndarray       # first hitting time per path, T + dt when never stopped
    radius: float
    delta: float
    T: float
    dt: float

    @property
    def never(self) -> float:
        return self.T + self.dt


def interaction_radius(N: int, delta: float, d: int = 3, law: str = "localization",
                       scale: float = 1.0) -> float:
    """Ball radius around the other particles.

    ``localization``: ``N**(-1/d - delta)``; ``interaction``:
    ``N**(-1/d - 1/delta)``.  Both reduce to the three-dimensional laws for
    ``d = 3``.
    """
    if law == "localization":
        expo = 1.0 / d + delta
    elif law == "interaction":
        expo = 1.0 / d + 1.0 / delta
    else:
        raise ValidationError(f"unknown radius law {law!r}", "law")
    return scale * float(N) ** (-expo)


def stopping_times(ensemble: PathEnsemble, N: int, d: int, delta: float = 4.0 / 51.0,
                   radius: float | None = None, inflate: float = 0.0) -> StoppingRecord:
    """First grid time at which particle 1 is within ``radius`` of another particle.

    ``inflate`` widens the radius to ``radius * (1 + inflate * sqrt(dt))``.
    """
    if ensemble.dim != N * d:
        raise ValidationError(f"ensemble dimension {ensemble.dim} != N*d = {N * d}", "N")
    if N < 2:
        raise ValidationError("stopping times need N >= 2", "N")
    p = ensemble.params
    if radius is None:
        radius = interaction_radius(N, delta, 3)
    r_eff = radius * (1.0 + inflate * math.sqrt(p.dt))
    tau = np.full(p.n_paths, p.T + p.dt)
    if r_eff <= 0:
        return StoppingRecord(tau, radius, delta, p.T, p.dt)
    y1 = ensemble.positions[:, :, :d]
    hit = np.zeros(ensemble.positions.shape[:2], dtype=bool)
    for j in range(1, N):
        yj = ensemble.positions[:, :, j * d:(j + 1) * d]
        hit |= np.linalg.norm(y1 - yj, axis=2) < r_eff
    first = np.argmax(hit, axis=1)
    any_hit = hit.any(axis=1)
    tau[any_hit] = ensemble.times[first[any_hit]]
    return StoppingRecord(tau, radius, delta, p.T, p.dt)


def survival_probability(record: StoppingRecord, t: float) -> tuple[float, float]:
    """Fraction of paths with ``tau >= t`` and its binomial standard error."""
    if not 0 <= t <= record.T + 1e-12:
        raise ValidationError(f"t = {t} outside [0, T]", "t")
    p = float(np.mean(record.tau >= t - 1e-12 * max(1.0, t)))
    return p, math.sqrt(p * (1 - p) / record.tau.size)


# --------------------------------------------------------------------------
# Girsanov relative entropy


@dataclass
class PathEntropy:
    total: float
    per_particle: float
    stderr: float
    per_particle_stderr: float


def path_relative_entropy(ensemble: PathEnsemble, b: Callable | None, u: Callable, t: float,
                          N: int = 1) -> PathEntropy:
    """``1/2 E sum_k |b(X_k) - u(X_k)|^2 dt`` over steps ``k < t/dt``.

    ``b=None`` reuses the drift recorded during simulation.  The standard
    error is that of the per-path integrals.
    """
    K = ensemble.step_index(t)
    dt = ensemble.params.dt
    pos = ensemble.positions[:, :K]
    n, _, dim = pos.shape
    flat = pos.reshape(-1, dim)
    bb = ensemble.drift_samples[:, :K].reshape(-1, dim) if b is None else b(flat)
    diff = bb - u(flat)
    per_path = 0.5 * dt * np.sum((diff * diff).reshape(n, K, dim), axis=(1, 2))
    total = float(per_path.mean())
    se = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PathEntropy(total, total / N, se, se / N)


def stationary_entropy_rate(rho: ScalarField, b: np.ndarray, u: np.ndarray) -> float:
    """Quadrature ``1/2 ∫ |b - u|^2 rho``, the entropy per unit time in stationarity."""
    diff = np.sum((np.asarray(b) - np.asarray(u)) ** 2, axis=0)
    return 0.5 * core.integrate_values(diff * rho.values, rho.grid)
