import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpchaos import core
from gpchaos.core import Grid, SampleSet, ScalarField
from gpchaos.diffusion import path_rng
from gpchaos.errors import CapExceeded, DensityFloor, DimensionMismatch, ValidationError


def gaussian(grid, var=1.0):
    return ScalarField.from_function(
        grid, lambda *x: np.exp(-sum(xi * xi for xi in x) / (2 * var)), density=True,
        normalize=True)


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid(1, 1.0, 4)
    with pytest.raises(ValidationError):
        Grid(1, -1.0, 16)
    with pytest.raises(CapExceeded):
        Grid(6, 5.0, 64)
    g = Grid(2, 3.0, 31)
    assert g.spacing == pytest.approx(0.2)
    assert g.shape == (31, 31)


def test_density_flag_checks_mass():
    g = Grid(1, 4.0, 41)
    with pytest.raises(ValidationError):
        ScalarField(g, np.ones(41), density=True)
    with pytest.raises(ValidationError):
        ScalarField(g, np.full(41, np.nan))


def test_integrate_basics():
    g = Grid(1, 8.0, 257)
    rho = gaussian(g)
    assert core.integrate(rho) == pytest.approx(1.0, abs=1e-10)
    assert core.integrate(ScalarField(g, np.zeros(257))) == 0.0
    second = ScalarField(g, g.axis**2 * rho.values)
    assert core.integrate(second) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_integrate_linear(alpha, beta, seed):
    g = Grid(2, 2.0, 9)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=g.shape), rng.normal(size=g.shape)
    lhs = core.integrate_values(alpha * f + beta * h, g)
    rhs = alpha * core.integrate_values(f, g) + beta * core.integrate_values(h, g)
    assert abs(lhs - rhs) < 1e-12


def test_moment():
    g = Grid(1, 8.0, 257)
    rho = gaussian(g)
    assert core.moment(rho, 2) == pytest.approx(1.0, abs=1e-6)
    assert core.moment(rho, 0) == pytest.approx(1.0, abs=1e-10)
    assert core.moment(SampleSet(np.zeros((5, 3))), 3.5) == 0.0


def test_marginals():
    g = Grid(1, 5.0, 21)
    rho = gaussian(g, 0.7)
    prod = core.tensor_power(rho, 2)
    assert np.max(np.abs(core.marginalize(prod, 1, 1).values - rho.values)) < 1e-10
    same = core.marginalize(prod, 2, 1)
    assert np.array_equal(same.values, prod.values)
    rng = np.random.default_rng(1)
    a = rng.random((21, 21))
    sym = ScalarField.density_from(g.with_dim(2), a + a.T)
    m1 = core.marginalize(sym, 1, 1).values
    m2 = core._contract(sym.values, sym.grid, [0])
    assert np.max(np.abs(m1 - m2)) < 1e-12
    assert core.integrate(core.marginalize(sym, 1, 1)) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(DimensionMismatch):
        core.marginalize(sym, 3, 1)
    with pytest.raises(DimensionMismatch):
        core.marginalize(sym, 1, 3)


def test_grad_log_density_gaussian_order():
    errs = []
    for n in (41, 81, 161):
        g = Grid(1, 4.0, n)
        rho = ScalarField.from_function(g, lambda x: np.exp(-x * x), density=True, normalize=True)
        b = core.grad_log_density(rho)[0]
        inner = np.abs(g.axis) < 3.0
        errs.append(np.max(np.abs(b[inner] + g.axis[inner])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)
    flat = ScalarField.density_from(Grid(2, 1.0, 9), np.ones((9, 9)))
    assert np.all(core.grad_log_density(flat) == 0)


def test_grad_log_density_3d():
    g = Grid(3, 5.0, 81)
    rho = gaussian(g, 0.5)   # exp(-r^2)
    b = core.grad_log_density(rho)
    inner = g.radius_squared() < 1
    for k in range(3):
        err = np.abs(b[k] + np.broadcast_to(g.coordinate(k), g.shape))[np.broadcast_to(inner, g.shape)]
        assert err.max() < 0.01


def test_density_floor_switches():
    g = Grid(1, 2.0, 11)
    vals = np.ones(11)
    vals[0] = 0.0
    rho = ScalarField.density_from(g, vals)
    with pytest.raises(DensityFloor):
        core.grad_log_density(rho, clamp=False)
    zeroed = core.grad_log_density(rho, clamp=False, zero_below_floor=True)
    assert zeroed[0, 0] == 0.0


def test_laplacian_fourth_order():
    errs = []
    for n in (33, 65):
        g = Grid(1, math.pi, n)
        x = g.axis
        lap = core.laplacian(np.sin(x), g.spacing)
        errs.append(np.max(np.abs(lap + np.sin(x))[3:-3]))
    assert math.log2(errs[0] / errs[1]) > 3.5


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(0, 2**32 - 1))
def test_interpolate_reproduces_multilinear(coef, seed):
    g = Grid(2, 1.5, 9)
    f = lambda x, y: coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * y
    vals = g.evaluate(f)
    pts = np.random.default_rng(seed).uniform(-1.5, 1.5, (20, 2))
    got = core.interpolate(vals, g, pts)
    assert np.allclose(got, f(pts[:, 0], pts[:, 1]), atol=1e-12)


def test_cell_masses_match_trapezoid():
    g = Grid(2, 3.0, 17)
    rho = gaussian(g)
    assert core.cell_masses(rho).sum() == pytest.approx(1.0, abs=1e-12)


def test_sampling_matches_interpolant():
    from scipy.stats import kstest
    g = Grid(1, 5.0, 41)
    rho = gaussian(g)
    pts = core.sample_density(rho, [path_rng(3, i) for i in range(4000)])[:, 0]
    cdf_nodes = np.concatenate([[0], np.cumsum(core.cell_masses(rho))])
    assert kstest(pts, lambda x: np.interp(x, g.axis, cdf_nodes)).pvalue > 0.01
    g2 = Grid(2, 4.0, 21)
    pts2 = core.sample_density(gaussian(g2), [path_rng(4, i) for i in range(3000)])
    assert np.all(np.abs(pts2.mean(axis=0)) < 0.1)
    assert np.all(np.abs(pts2.var(axis=0) - 1.0) < 0.1)


def test_field_io_roundtrip(tmp_path):
    g = Grid(2, 2.5, 9)
    f = ScalarField(g, np.arange(81.0))
    core.save_field(tmp_path / "f.bin", f)
    back = core.load_field(tmp_path / "f.bin")
    assert back.grid == g and np.array_equal(back.values, f.values)
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:24] == (2).to_bytes(8, "little") + (9).to_bytes(8, "little") + np.float64(2.5).tobytes()
    core.save_field_csv(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "i0,i1,value" and lines[2] == "0,1,1.0"


def test_sample_set_validation():
    with pytest.raises(ValidationError):
        SampleSet(np.array([[np.inf]]))
    with pytest.raises(DimensionMismatch):
        SampleSet(np.zeros((3, 2)), dim=3)
    assert SampleSet(np.zeros(4)).dim == 1
