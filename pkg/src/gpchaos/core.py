"""Uniform tensor grids, fields on them, quadrature and differentiation.

Every continuous object in the package lives on a cube ``[-L, L]**dim``
sampled with ``n`` points per axis (both end points included).  Integrals
use the tensor-product trapezoidal rule, which is exactly the integral of
the multilinear interpolant of the nodal values; sampling and
interpolation below use the same interpolant so that all three agree.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CapExceeded, DensityFloor, DimensionMismatch, ValidationError

# log of the largest number of grid points we are willing to allocate
MAX_LOG_POINTS = math.log(2.0**26)

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class Grid:
    """Cube ``[-extent, extent]**dim`` with ``points`` nodes per axis."""

    dim: int
    extent: float
    points: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"grid dim must be a positive integer, got {self.dim}", "dim")
        if not self.extent > 0 or not math.isfinite(self.extent):
            raise ValidationError(f"grid extent must be positive, got {self.extent}", "extent")
        if int(self.points) != self.points or self.points < 8:
            raise ValidationError(f"need at least 8 points per axis, got {self.points}", "points")
        if self.dim * math.log(self.points) > MAX_LOG_POINTS:
            raise CapExceeded(f"{self.points}**{self.dim} grid points exceed the memory cap")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.points - 1)

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.points)

    @property
    def weights1d(self) -> np.ndarray:
        w = np.full(self.points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate of axis ``k``, shaped to broadcast against the grid."""
        shape = [1] * self.dim
        shape[k] = self.points
        return self.axis.reshape(shape)

    def radius_squared(self, axes: Sequence[int] | None = None) -> np.ndarray:
        axes = range(self.dim) if axes is None else axes
        r2 = np.zeros((1,) * self.dim)
        for k in axes:
            r2 = r2 + self.coordinate(k) ** 2
        return r2

    def points_array(self) -> np.ndarray:
        """All nodes as a ``(size, dim)`` array in row-major order."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def with_dim(self, dim: int) -> "Grid":
        return Grid(dim, self.extent, self.points)

    def evaluate(self, fn: Callable) -> np.ndarray:
        """Evaluate ``fn(x0, x1, ...)`` on the grid with broadcasting."""
        out = fn(*[self.coordinate(k) for k in range(self.dim)])
        return np.broadcast_to(np.asarray(out, dtype=float), self.shape).copy()


@dataclass
class ScalarField:
    """Real values on a grid.  ``density`` fields are nonnegative and normalized."""

    grid: Grid
    values: np.ndarray
    density: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise DimensionMismatch(
                f"field has {v.size} values but grid has {self.grid.size} points")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite", "values")
        self.values = v
        if self.density:
            if v.min() < 0:
                raise ValidationError("density has negative values", "values")
            mass = integrate(self)
            if abs(mass - 1.0) > 1e-10:
                raise ValidationError(f"density integrates to {mass!r}, not 1", "values")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable, density=False, normalize=False):
        values = grid.evaluate(fn)
        if normalize:
            values = values / integrate(cls(grid, values))
        return cls(grid, values, density=density)

    @classmethod
    def density_from(cls, grid: Grid, values) -> "ScalarField":
        """Normalize nonnegative ``values`` into a density field."""
        values = np.clip(np.asarray(values, dtype=float).reshape(grid.shape), 0.0, None)
        values = values / integrate(cls(grid, values))
        return cls(grid, values, density=True)

    @property
    def dim(self) -> int:
        return self.grid.dim


@dataclass
class SampleSet:
    """Equally weighted point cloud, ``points`` has shape ``(count, dim)``."""

    points: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p.reshape(-1, 1) if self.dim in (0, 1) else p.reshape(1, -1)
        if p.shape[0] < 1:
            raise ValidationError("sample set needs at least one point", "points")
        if not np.all(np.isfinite(p)):
            raise ValidationError("sample coordinates must be finite", "points")
        if self.dim and p.shape[1] != self.dim:
            raise DimensionMismatch(f"points have dimension {p.shape[1]}, expected {self.dim}")
        self.points = p
        self.dim = p.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, 1.0 / self.count)


# --------------------------------------------------------------------------
# quadrature


def _contract(values: np.ndarray, grid: Grid, axes: Sequence[int]) -> np.ndarray:
    """Trapezoid-integrate ``values`` over ``axes`` (highest axis first)."""
    w = grid.weights1d
    out = values
    for k in sorted(axes, reverse=True):
        out = np.tensordot(out, w, axes=([k], [0]))
    return out


def integrate(f: ScalarField) -> float:
    """Trapezoidal integral of a field over its grid box."""
    return float(_contract(f.values, f.grid, range(f.grid.dim)))


def integrate_values(values: np.ndarray, grid: Grid) -> float:
    return float(_contract(np.asarray(values, dtype=float), grid, range(grid.dim)))


def quadrature_weights(grid: Grid) -> np.ndarray:
    """Full tensor-product trapezoid weights, shaped like the grid."""
    w = grid.weights1d
    out = np.ones((1,) * grid.dim)
    for k in range(grid.dim):
        shape = [1] * grid.dim
        shape[k] = grid.points
        out = out * w.reshape(shape)
    return np.broadcast_to(out, grid.shape)


def moment(rho, k: float) -> float:
    """``k``-th absolute moment of a density field or sample set."""
    if k < 0:
        raise ValidationError("moment order must be nonnegative", "k")
    if isinstance(rho, SampleSet):
        r = np.linalg.norm(rho.points, axis=1)
        return float(np.mean(r**k)) if k > 0 else 1.0
    if k == 0:
        return integrate(rho)
    r = np.sqrt(rho.grid.radius_squared())
    return integrate_values(r**k * rho.values, rho.grid)


def marginalize(rho_joint: ScalarField, n_particles_kept: int, d: int) -> ScalarField:
    """Marginal density of the first ``n_particles_kept`` particles.

    The joint field is read as ``N = dim // d`` particle blocks of ``d``
    coordinates each; the trailing blocks are integrated out.
    """
    dim = rho_joint.grid.dim
    if d < 1 or dim % d:
        raise DimensionMismatch(f"grid dimension {dim} is not a multiple of d={d}")
    keep = n_particles_kept * d
    if n_particles_kept < 1 or keep > dim:
        raise DimensionMismatch(f"cannot keep {n_particles_kept} particles of a {dim}-dim density")
    if keep == dim:
        return ScalarField(rho_joint.grid, rho_joint.values.copy(), density=rho_joint.density)
    values = _contract(rho_joint.values, rho_joint.grid, range(keep, dim))
    return ScalarField(rho_joint.grid.with_dim(keep), values, density=rho_joint.density)


def tensor_power(rho: ScalarField, n: int) -> ScalarField:
    """``rho ⊗ ... ⊗ rho`` (``n`` factors) on the product grid."""
    out = rho.values
    for _ in range(n - 1):
        out = np.multiply.outer(out, rho.values)
    return ScalarField(rho.grid.with_dim(rho.grid.dim * n), out, density=rho.density)


# --------------------------------------------------------------------------
# differentiation


def laplacian(values: np.ndarray, h: float, axes: Sequence[int] | None = None,
              order: int = 4) -> np.ndarray:
    """Finite-difference Laplacian with zero values outside the box.

    ``order`` selects the 3-point (2) or 5-point (4) stencil.  With the
    zero ghost convention the operator is a symmetric matrix, so the
    discrete energy forms below are exact quadratic forms.
    """
    f = np.asarray(values, dtype=float)
    axes = range(f.ndim) if axes is None else axes
    out = np.zeros_like(f)
    for ax in axes:
        def sl(a, b):
            s = [slice(None)] * f.ndim
            s[ax] = slice(a, b)
            return tuple(s)
        if order == 2:
            out -= 2.0 * f
            out[sl(1, None)] += f[sl(None, -1)]
            out[sl(None, -1)] += f[sl(1, None)]
        elif order == 4:
            part = -30.0 * f
            part[sl(1, None)] += 16.0 * f[sl(None, -1)]
            part[sl(None, -1)] += 16.0 * f[sl(1, None)]
            part[sl(2, None)] -= f[sl(None, -2)]
            part[sl(None, -2)] -= f[sl(2, None)]
            out += part / 12.0
        else:
            raise ValidationError(f"stencil order must be 2 or 4, got {order}", "order")
    return out / (h * h)


def zero_faces(values: np.ndarray, axes: Sequence[int] | None = None) -> np.ndarray:
    """Set the box faces to zero in place (homogeneous Dirichlet nodes).

    With the faces pinned the finite-difference operators act on interior
    nodes only, where trapezoid and plain sums coincide, so they are
    symmetric with respect to the quadrature inner product.
    """
    axes = range(values.ndim) if axes is None else axes
    for ax in axes:
        s = [slice(None)] * values.ndim
        s[ax] = 0
        values[tuple(s)] = 0.0
        s[ax] = -1
        values[tuple(s)] = 0.0
    return values


def laplacian_spectral_radius(h: float, n_axes: int, order: int = 4) -> float:
    """Upper bound of the spectrum of ``-laplacian`` over ``n_axes`` axes."""
    per_axis = 4.0 if order == 2 else 64.0 / 12.0
    return n_axes * per_axis / (h * h)


def gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences inside, one-sided at the box faces; shape ``(dim, *grid)``."""
    g = np.gradient(np.asarray(values, dtype=float), h)
    if not isinstance(g, (list, tuple)):
        g = [g]
    return np.stack(g)


def density_floor(rho: ScalarField, rel: float = DEFAULT_FLOOR) -> float:
    return rel * float(rho.values.max())


def grad_log_density(rho: ScalarField, clamp: bool = True, zero_below_floor: bool = False,
                     floor_rel: float = DEFAULT_FLOOR) -> np.ndarray:
    """Nelson drift ``0.5 * grad(rho) / rho`` on the grid.

    Below the floor ``floor_rel * max(rho)`` the density is clamped (default),
    or the drift is set to zero when ``zero_below_floor`` is set.  With
    neither, a density dipping under the floor raises :class:`DensityFloor`.
    """
    floor = density_floor(rho, floor_rel)
    v = rho.values
    below = v < floor
    if below.any() and not (clamp or zero_below_floor):
        raise DensityFloor(f"density minimum {v.min():.3e} below floor {floor:.3e}")
    grad = gradient(v, rho.grid.spacing)
    drift = 0.5 * grad / np.maximum(v, floor)
    if zero_below_floor:
        drift[:, below] = 0.0
    return drift


# --------------------------------------------------------------------------
# interpolation and sampling on the multilinear interpolant


def _locate(grid: Grid, points: np.ndarray):
    x = (np.clip(points, -grid.extent, grid.extent) + grid.extent) / grid.spacing
    idx = np.minimum(np.floor(x).astype(np.int64), grid.points - 2)
    return idx, x - idx


def interpolate(values: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at ``points`` of shape ``(m, dim)``.

    ``values`` has the grid shape, optionally with leading component axes;
    the result has shape ``(*components, m)``.  Points outside the box are
    clamped onto it.
    """
    points = np.atleast_2d(points)
    dim = grid.dim
    lead = values.shape[:-dim] if values.ndim > dim else ()
    flat = values.reshape(lead + (-1,))
    idx, frac = _locate(grid, points)
    strides = grid.points ** np.arange(dim - 1, -1, -1)
    base = idx @ strides
    out = np.zeros(lead + (points.shape[0],))
    for corner in range(2**dim):
        bits = [(corner >> (dim - 1 - k)) & 1 for k in range(dim)]
        w = np.ones(points.shape[0])
        offset = 0
        for k, b in enumerate(bits):
            w = w * (frac[:, k] if b else 1.0 - frac[:, k])
            offset += b * strides[k]
        out += flat[..., base + offset] * w
    return out


def cell_masses(rho: ScalarField) -> np.ndarray:
    """Mass of every grid cell under the multilinear interpolant (sums to 1)."""
    v = rho.values
    for ax in range(rho.grid.dim):
        n = v.shape[ax]
        v = 0.5 * (np.take(v, range(n - 1), axis=ax) + np.take(v, range(1, n), axis=ax))
    return v * rho.grid.spacing**rho.grid.dim


def sample_density(rho: ScalarField, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    """Draw one point per generator from the interpolated density.

    One dimension uses the exact inverse CDF of the piecewise-linear density.
    Higher dimensions pick a cell by inverse CDF over cell masses and then
    rejection-sample the multilinear interpolant inside it.
    """
    grid = rho.grid
    masses = cell_masses(rho).ravel()
    cdf = np.cumsum(masses)
    cdf /= cdf[-1]
    h = grid.spacing
    out = np.empty((len(rngs), grid.dim))
    if grid.dim == 1:
        v = rho.values
        for i, rng in enumerate(rngs):
            u = rng.random()
            c = min(int(np.searchsorted(cdf, u, side="right")), len(masses) - 1)
            prev = cdf[c - 1] if c > 0 else 0.0
            # mass needed inside cell c, solve the quadratic of the linear density
            target = (u - prev) * masses.sum()
            f0, f1 = v[c], v[c + 1]
            slope = (f1 - f0) / h
            if abs(slope) * h < 1e-12 * max(f0, 1e-300):
                t = target / max(f0, 1e-300)
            else:
                disc = max(f0 * f0 + 2.0 * slope * target, 0.0)
                t = (-f0 + math.sqrt(disc)) / slope
            out[i, 0] = -grid.extent + c * h + min(max(t, 0.0), h)
        return out
    cells_shape = (grid.points - 1,) * grid.dim
    v = rho.values
    for i, rng in enumerate(rngs):
        c = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(masses) - 1)
        cidx = np.array(np.unravel_index(c, cells_shape))
        corner = v[tuple(slice(j, j + 2) for j in cidx)]
        vmax = corner.max()
        while True:
            frac = rng.random(grid.dim)
            val = corner
            for k in range(grid.dim):
                val = val[0] * (1.0 - frac[k]) + val[1] * frac[k]
            if rng.random() * vmax <= val:
                break
        out[i] = -grid.extent + (cidx + frac) * h
    return out


# --------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<qqd")


def save_field(path, f: ScalarField) -> None:
    """Write header (dim, n, L as little-endian 64-bit) then row-major float64 values."""
    with open(path, "wb") as fh:
        fh.write(field_bytes(f))


def field_bytes(f: ScalarField) -> bytes:
    g = f.grid
    return _HEADER.pack(g.dim, g.points, g.extent) + f.values.astype("<f8").tobytes(order="C")


def load_field(path, density: bool = False) -> ScalarField:
    with open(path, "rb") as fh:
        raw = fh.read()
    dim, n, extent = _HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    grid = Grid(int(dim), float(extent), int(n))
    return ScalarField(grid, values.astype(float), density=density)


def save_field_csv(path, f: ScalarField) -> None:
    """One row per node: index tuple then value."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{k}" for k in range(f.grid.dim)] + ["value"])
        for idx in np.ndindex(*f.grid.shape):
            w.writerow(list(idx) + [repr(float(f.values[idx]))])
