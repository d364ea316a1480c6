"""Gross-Pitaevskii minimization by normalized gradient flow.

Units follow hbar = 2m = 1, so the functional is

    E[phi] = ∫ |grad phi|^2 + V phi^2 + g phi^4

and its Euler-Lagrange equation reads ``-Δphi + V phi + 2 g phi^3 = λ phi``.
A problem may instead carry a pair kernel ``w``; the interaction is then the
Hartree term ``1/2 ∫∫ w(x - y) rho(x) rho(y)``, which is the exact
mean-field limit of the ``w / N`` particle family used by the chaos sweep.
In both cases ``λ - E`` equals the interaction energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.signal import fftconvolve

from . import core
from .core import Grid, ScalarField
from .errors import EnergyIncrease, NoConvergence, NotNormalized, ValidationError


def harmonic(*x):
    return sum(xi * xi for xi in x)


def quartic(*x):
    return sum(xi * xi for xi in x) ** 2


TRAPS = {"harmonic": harmonic, "quartic": quartic}


@dataclass
class GpProblem:
    """Trap, coupling and grid of a GP (or Hartree) minimization."""

    grid: Grid
    trap: Callable = harmonic
    g: float = 0.0
    kernel: Callable | None = None  # pair kernel of the distance, replaces g when set
    stencil: int = 4
    trap_name: str = "harmonic"
    _trap_values: np.ndarray | None = field(default=None, repr=False)
    _kernel_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if isinstance(self.trap, str):
            self.trap_name = self.trap
            try:
                self.trap = TRAPS[self.trap]
            except KeyError:
                raise ValidationError(f"unknown trap {self.trap!r}", "trap") from None
        if self.grid.dim not in (1, 2, 3):
            raise ValidationError("GP problems live in d = 1, 2 or 3", "dim")
        if self.g < 0:
            raise ValidationError("coupling g must be nonnegative", "g")
        if self.trap_values.min() < 0:
            raise ValidationError("trap must be nonnegative on the grid", "trap")

    @property
    def d(self) -> int:
        return self.grid.dim

    @property
    def trap_values(self) -> np.ndarray:
        if self._trap_values is None:
            self._trap_values = self.grid.evaluate(self.trap)
        return self._trap_values

    def _kernel_grid(self) -> np.ndarray:
        if self._kernel_values is None:
            n, h, d = self.grid.points, self.grid.spacing, self.grid.dim
            offs = h * np.arange(-(n - 1), n)
            r2 = np.zeros((1,) * d)
            for k in range(d):
                shape = [1] * d
                shape[k] = offs.size
                r2 = r2 + offs.reshape(shape) ** 2
            self._kernel_values = np.broadcast_to(
                np.asarray(self.kernel(np.sqrt(r2)), dtype=float), (offs.size,) * d).copy()
        return self._kernel_values

    def mean_field(self, rho: np.ndarray) -> np.ndarray:
        """Potential felt by one particle from the density: ``2 g rho`` or ``w * rho``."""
        if self.kernel is None:
            return 2.0 * self.g * rho
        weighted = rho * core.quadrature_weights(self.grid)
        if self.d == 1:
            n = self.grid.points
            k = self._kernel_grid()
            idx = np.arange(n)
            mat = k[idx[:, None] - idx[None, :] + n - 1]
            return mat @ weighted
        return fftconvolve(weighted, self._kernel_grid(), mode="same")

    def interaction(self, rho: np.ndarray) -> float:
        if self.kernel is None:
            return self.g * core.integrate_values(rho * rho, self.grid)
        return 0.5 * core.integrate_values(rho * self.mean_field(rho), self.grid)

    def apply(self, phi: np.ndarray) -> np.ndarray:
        """GP operator ``(-Δ + V + mean_field(phi^2)) phi``."""
        h = self.grid.spacing
        out = (-core.laplacian(phi, h, order=self.stencil)
               + (self.trap_values + self.mean_field(phi * phi)) * phi)
        return core.zero_faces(out)


@dataclass
class EnergyBreakdown:
    kinetic: float
    trap: float
    interaction: float

    @property
    def total(self) -> float:
        return self.kinetic + self.trap + self.interaction

    def as_dict(self):
        return {"kinetic": self.kinetic, "trap": self.trap,
                "interaction": self.interaction, "total": self.total}


@dataclass
class GpSolution:
    phi: ScalarField
    lam: float
    energy: EnergyBreakdown
    residual: float
    iterations: int
    problem: GpProblem

    @property
    def rho(self) -> ScalarField:
        return ScalarField.density_from(self.phi.grid, self.phi.values**2)


def _norm2(phi: np.ndarray, grid: Grid) -> float:
    return core.integrate_values(phi * phi, grid)


def _energy(phi: np.ndarray, problem: GpProblem) -> EnergyBreakdown:
    grid = problem.grid
    kin = core.integrate_values(
        -phi * core.laplacian(phi, grid.spacing, order=problem.stencil), grid)
    rho = phi * phi
    return EnergyBreakdown(kin, core.integrate_values(problem.trap_values * rho, grid),
                           problem.interaction(rho))


def gp_energy(phi: ScalarField, problem: GpProblem) -> EnergyBreakdown:
    """Kinetic, trap and interaction parts of the functional at ``phi``."""
    norm = _norm2(phi.values, phi.grid)
    if abs(norm - 1.0) > 1e-8:
        raise NotNormalized(f"∫phi^2 = {norm:.12g}, expected 1")
    return _energy(phi.values, problem)


def chemical_potential(phi: np.ndarray, problem: GpProblem) -> float:
    return core.integrate_values(phi * problem.apply(phi), problem.grid)


def _normalize(phi, grid):
    phi = core.zero_faces(np.array(phi, dtype=float))
    return phi / math.sqrt(_norm2(phi, grid))


def gaussian_start(problem: GpProblem) -> np.ndarray:
    """Normalized Gaussian whose width minimizes the functional."""
    r2 = problem.grid.radius_squared()

    def trial(log_sigma):
        s = math.exp(log_sigma)
        phi = _normalize(np.broadcast_to(np.exp(-r2 / (2 * s * s)), problem.grid.shape),
                         problem.grid)
        return phi

    L = problem.grid.extent
    h = problem.grid.spacing
    res = minimize_scalar(lambda ls: _energy(trial(ls), problem).total,
                          bounds=(math.log(2 * h), math.log(L / 2)), method="bounded",
                          options={"xatol": 1e-4})
    return trial(res.x)


def default_step(problem: GpProblem, phi: np.ndarray) -> float:
    """``0.9 / ||H||`` with the operator norm bounded term by term."""
    h = problem.grid.spacing
    bound = (core.laplacian_spectral_radius(h, problem.d, problem.stencil)
             + problem.trap_values.max() + problem.mean_field(phi * phi).max())
    return 0.9 / bound


def minimize_gp(problem: GpProblem, step: float | None = None, tol: float = 1e-8,
                max_iter: int = 200_000, init: str | np.ndarray = "gaussian",
                check_monotone: bool = True) -> GpSolution:
    """Normalized gradient flow ``phi <- normalize(phi - step * H(phi) phi)``.

    Stops when ``||H phi - λ phi||_2 < tol``.  The energy is required to
    decrease at every step; a step that raises it by more than rounding
    raises :class:`EnergyIncrease`.
    """
    grid = problem.grid
    if isinstance(init, str):
        if init == "gaussian":
            phi = gaussian_start(problem)
        elif init == "uniform":
            phi = _normalize(np.ones(grid.shape), grid)
        else:
            raise ValidationError(f"unknown initialization {init!r}", "init")
    else:
        phi = _normalize(np.asarray(init, dtype=float).reshape(grid.shape), grid)
    if step is None:
        step = default_step(problem, phi)
    if not step > 0 or not tol > 0:
        raise ValidationError("step and tol must be positive", "step")
    energy = math.inf
    residual = math.inf
    for it in range(1, max_iter + 1):
        hphi = problem.apply(phi)
        lam = core.integrate_values(phi * hphi, grid)
        if check_monotone:
            # E = λ - interaction for both quadratic interaction forms
            new = lam - problem.interaction(phi * phi)
            if new > energy + 1e-13 * max(1.0, abs(energy)):
                raise EnergyIncrease(
                    f"energy rose from {energy!r} to {new!r} at iteration {it}; reduce the step")
            energy = new
        residual = math.sqrt(_norm2(hphi - lam * phi, grid))
        if residual < tol:
            break
        phi = _normalize(phi - step * hphi, grid)
    else:
        raise NoConvergence(f"no convergence after {max_iter} iterations "
                            f"(residual {residual:.3e})", max_iter, residual)
    phi = np.abs(phi)
    en = _energy(phi, problem)
    return GpSolution(ScalarField(grid, phi), chemical_potential(phi, problem), en,
                      residual, it, problem)


def gp_drift(sol: GpSolution, **kwargs) -> np.ndarray:
    """Limit drift ``u_GP = grad(rho_GP) / (2 rho_GP)``."""
    return core.grad_log_density(sol.rho, **kwargs)


def thomas_fermi_density(problem: GpProblem) -> ScalarField:
    """``(λ_TF - V)_+ / (2 g)`` with ``λ_TF`` fixed by normalization on the grid."""
    V = problem.trap_values
    g = problem.g

    def mass(lam):
        return core.integrate_values(np.clip(lam - V, 0, None), problem.grid) / (2 * g)

    lo, hi = 0.0, 1.0
    while mass(hi) < 1:
        hi *= 2
    lam = brentq(lambda l: mass(l) - 1.0, lo, hi, xtol=1e-14)
    return ScalarField.density_from(problem.grid, np.clip(lam - V, 0, None) / (2 * g))
