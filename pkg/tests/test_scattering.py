import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpchaos.errors import ValidationError, ZeroScatteringLength
from gpchaos.scattering import (gp_length, gp_scaled_potential, s_hat, smooth_bump,
                                solve_zero_energy, square_well, square_well_length,
                                unit_length_well, zero_potential)

# 1 - tanh(1), the V0 = 2, R = 1 well
A_WELL = 0.2384058440442351


def test_square_well_oracle():
    assert square_well_length(2.0, 1.0) == pytest.approx(A_WELL, abs=1e-15)
    sol = solve_zero_energy(square_well(2.0, 1.0), 20.0, 20000)
    assert abs(sol.scattering_length - A_WELL) < 1e-6
    assert sol.u[0] == 0.0
    tail = sol.r > 1.0
    ratio = sol.u[tail] / (sol.r[tail] - sol.scattering_length)
    assert np.ptp(ratio) / abs(ratio.mean()) < 1e-6
    assert sol.phi0[-1] == pytest.approx(1.0 - A_WELL / sol.r[-1], rel=1e-9)


def test_zero_potential():
    sol = solve_zero_energy(zero_potential(1.0), 10.0, 1000)
    assert abs(sol.scattering_length) < 1e-12
    assert np.allclose(sol.phi0, 1.0)
    with pytest.raises(ZeroScatteringLength):
        s_hat(sol)


def test_hard_sphere_limit():
    v = square_well(2e6, 1.0)
    sol = solve_zero_energy(v, 10.0, 200000)
    assert abs(sol.scattering_length - 1.0) < 1e-2
    assert s_hat(sol) == pytest.approx(1.0, abs=1e-3)


def test_s_hat_soft_well():
    v = square_well(2.0, 1.0)
    val = s_hat(solve_zero_energy(v, 20.0, 4000), v)
    assert 0.0 < val <= 1.0
    # frozen from a refined run of the same quadrature
    assert val == pytest.approx(0.283533, abs=2e-5)


def test_validation():
    with pytest.raises(ValidationError):
        solve_zero_energy(square_well(1.0, 1.0), 1.5, 1000)
    with pytest.raises(ValidationError):
        solve_zero_energy(square_well(1.0, 1.0), 10.0, 50)
    with pytest.raises(ValidationError):
        square_well(-1.0, 1.0)


def test_gp_scaling_identity_and_substitution():
    v1 = unit_length_well(2.0)
    same = gp_scaled_potential(v1, 1, 4 * math.pi)
    r = np.linspace(0, 3, 31)
    assert np.allclose(same(r), v1(r))
    scaled = gp_scaled_potential(v1, 100, 4 * math.pi)
    assert gp_length(100, 4 * math.pi) == pytest.approx(0.01)
    assert np.allclose(scaled(r / 100), 1e4 * v1(r))
    assert scaled.range_ == pytest.approx(0.02)


def test_scale_covariance_and_s_hat_invariance():
    v1 = unit_length_well(2.0)
    g = 10.0
    ref = None
    for N in (1, 4, 16, 64):
        a = gp_length(N, g)
        v = gp_scaled_potential(v1, N, g)
        sol = solve_zero_energy(v, 20.0 * v.range_, 20000)
        assert abs(sol.scattering_length / a - 1.0) < 1e-5
        s = s_hat(sol)
        ref = s if ref is None else ref
        assert abs(s - ref) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 200.0), st.floats(0.2, 3.0), st.booleans())
def test_length_bounds(height, radius, bump):
    v = (smooth_bump if bump else square_well)(height, radius)
    sol = solve_zero_energy(v, 6.0 * radius, 2000)
    assert -1e-9 <= sol.scattering_length <= radius + 1e-9
    if not bump:
        assert sol.scattering_length == pytest.approx(square_well_length(height, radius), abs=1e-5)
    if sol.scattering_length > 1e-6:
        assert 0.0 < s_hat(sol) <= 1.0
