"""Zero-energy scattering for a repulsive, compactly supported pair potential.

The radial reduction ``u = r * phi0`` obeys ``u'' = v(r) u / 2`` with
``u(0) = 0``.  Outside the support ``u`` is exactly linear, ``u = c (r - a)``,
and ``a`` is the scattering length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import FitResidual, ValidationError, ZeroScatteringLength

# u is rescaled whenever it grows past this, the scale is tracked in log form
_RESCALE = 1e150


@dataclass(frozen=True)
class PairPotential:
    """Nonnegative radial profile vanishing for ``r > range_``."""

    profile: Callable[[np.ndarray], np.ndarray]
    range_: float
    label: str = "custom"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r > self.range_, 0.0, self.profile(np.abs(r)))
        return out

    def is_zero(self) -> bool:
        probe = np.linspace(0.0, self.range_, 257)
        return not np.any(self(probe) > 0)


def square_well(height: float, radius: float) -> PairPotential:
    """``v(r) = height`` for ``r < radius``, else 0."""
    if height < 0 or radius <= 0:
        raise ValidationError("square well needs height >= 0 and radius > 0", "well")
    return PairPotential(lambda r: np.where(r < radius, height, 0.0) * np.ones_like(r),
                         radius, f"square_well({height:g},{radius:g})")


def smooth_bump(height: float, radius: float) -> PairPotential:
    """C-infinity bump ``height * exp(1 - 1/(1 - (r/R)^2))`` supported on ``r < R``."""
    def prof(r):
        x = np.clip(np.asarray(r, dtype=float) / radius, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            val = height * np.exp(1.0 - 1.0 / (1.0 - x * x))
        return np.where(x < 1.0, val, 0.0)
    return PairPotential(prof, radius, f"bump({height:g},{radius:g})")


def zero_potential(radius: float = 1.0) -> PairPotential:
    return PairPotential(lambda r: np.zeros_like(r), radius, "zero")


def square_well_length(height: float, radius: float) -> float:
    """Closed-form scattering length ``R - tanh(kR)/k`` with ``k = sqrt(height/2)``."""
    if height == 0:
        return 0.0
    k = math.sqrt(height / 2.0)
    return radius - math.tanh(k * radius) / k


def unit_length_well(radius: float = 2.0) -> PairPotential:
    """Square well of the given radius whose scattering length is exactly 1."""
    if radius <= 1.0:
        raise ValidationError("a unit scattering length needs radius > 1", "radius")
    k = brentq(lambda k: radius - math.tanh(k * radius) / k - 1.0, 1e-6, 1e6, xtol=1e-15)
    return square_well(2.0 * k * k, radius)


@dataclass
class ScatteringSolution:
    r: np.ndarray
    u: np.ndarray            # normalized so that u ~ (r - a) at large r
    du: np.ndarray
    scattering_length: float
    slope: float             # raw tail slope before normalization
    fit_residual: float
    spacing: float
    support: float

    @property
    def phi0(self) -> np.ndarray:
        """``phi0 = u / r`` (tends to 1 at infinity)."""
        out = np.empty_like(self.u)
        out[1:] = self.u[1:] / self.r[1:]
        out[0] = self.du[0]
        return out

    @property
    def dphi0(self) -> np.ndarray:
        out = np.zeros_like(self.u)
        r = self.r[1:]
        out[1:] = (self.du[1:] * r - self.u[1:]) / (r * r)
        return out


def _rk4(v: PairPotential, r: np.ndarray):
    h = r[1] - r[0]
    n = len(r)
    u = np.empty(n)
    du = np.empty(n)
    logscale = np.zeros(n)
    y = np.array([0.0, 1.0])
    scale = 0.0
    # one-sided limits inside each step so a jump at a node is not straddled
    eps = 1e-9 * h
    vstart = v(r[:-1] + eps)
    vend = v(r[1:] - eps)
    vmid = v(r[:-1] + 0.5 * h)
    u[0], du[0] = y
    for i in range(n - 1):
        a0, a1, a2 = 0.5 * vstart[i], 0.5 * vmid[i], 0.5 * vend[i]
        k1 = (y[1], a0 * y[0])
        k2 = (y[1] + 0.5 * h * k1[1], a1 * (y[0] + 0.5 * h * k1[0]))
        k3 = (y[1] + 0.5 * h * k2[1], a1 * (y[0] + 0.5 * h * k2[0]))
        k4 = (y[1] + h * k3[1], a2 * (y[0] + h * k3[0]))
        y = y + (h / 6.0) * np.array([k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0],
                                      k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]])
        big = max(abs(y[0]), abs(y[1]))
        if big > _RESCALE:
            y = y / big
            scale += math.log(big)
        u[i + 1], du[i + 1] = y
        logscale[i + 1] = scale
    # bring every stored value onto the final scale
    shift = np.exp(logscale - scale)
    return u * shift, du * shift


def solve_zero_energy(v: PairPotential, r_max: float, n_r: int) -> ScatteringSolution:
    """Integrate outward from ``u(0)=0, u'(0)=1`` and fit the linear tail.

    The grid is stretched slightly so that the support radius falls on a
    node, which keeps the classical RK4 order across a discontinuous edge.
    """
    if r_max <= 2.0 * v.range_:
        raise ValidationError("r_max must exceed twice the potential range", "r_max")
    if n_r < 100:
        raise ValidationError("need at least 100 radial steps", "n_r")
    steps_inside = max(1, round(n_r * v.range_ / r_max))
    h = v.range_ / steps_inside
    n_steps = int(math.ceil(r_max / h))
    r = h * np.arange(n_steps + 1)
    u, du = _rk4(v, r)
    tail = r > v.range_
    rt, ut = r[tail], u[tail]
    A = np.stack([rt, np.ones_like(rt)], axis=1)
    (c, b), *_ = np.linalg.lstsq(A, ut, rcond=None)
    resid = float(np.max(np.abs(A @ np.array([c, b]) - ut)) / np.max(np.abs(ut)))
    if resid > 1e-6:
        raise FitResidual(f"linear tail fit residual {resid:.3e} exceeds 1e-6")
    a = -b / c
    return ScatteringSolution(r=r, u=u / c, du=du / c, scattering_length=float(a),
                              slope=float(c), fit_residual=resid, spacing=h,
                              support=v.range_)


def _gradient_norm(sol: ScatteringSolution) -> float:
    """``∫ |grad phi0|^2`` over R^3, tail beyond the grid added analytically."""
    g = sol.dphi0
    integrand = 4.0 * math.pi * g * g * sol.r * sol.r
    body = float(np.trapezoid(integrand, sol.r))
    return body + 4.0 * math.pi * sol.scattering_length**2 / sol.r[-1]


def s_hat(sol: ScatteringSolution, potential: PairPotential | None = None,
          tol: float = 1e-5, max_doublings: int = 6) -> float:
    """Kinetic fraction ``∫|grad phi0|^2 / (4 pi a)`` of the scattering energy.

    When the potential is supplied the radial grid is doubled until the
    value changes by less than ``tol``.
    """
    a = sol.scattering_length
    if a <= 1e-12:
        raise ZeroScatteringLength(f"scattering length {a:.3e} is zero, s_hat undefined")
    value = _gradient_norm(sol) / (4.0 * math.pi * a)
    if potential is not None:
        n_r = len(sol.r) - 1
        for _ in range(max_doublings):
            n_r *= 2
            finer = solve_zero_energy(potential, sol.r[-1], n_r)
            new = _gradient_norm(finer) / (4.0 * math.pi * finer.scattering_length)
            done = abs(new - value) < tol
            value = new
            if done:
                break
    if not 0.0 < value <= 1.0 + 1e-9:
        raise ValueError(f"s_hat={value} outside (0, 1]")
    return min(value, 1.0)


def gp_length(N: int, g: float) -> float:
    """GP scattering length ``g / (4 pi N)``."""
    return g / (4.0 * math.pi * N)


def gp_scaled_potential(v1: PairPotential, N: int, g: float) -> PairPotential:
    """``r -> v1(r / a) / a**2`` with ``a = g / (4 pi N)``."""
    if N < 1 or g <= 0:
        raise ValidationError("need N >= 1 and g > 0", "N")
    a = gp_length(N, g)
    return PairPotential(lambda r: v1(np.asarray(r) / a) / (a * a), v1.range_ * a,
                         f"gp[{v1.label},N={N},g={g:g}]")
