import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from slagkit.cylinder import (ModeField, ave_project, bump, decay_rate, derivative_matrix, dirac_apply,
                              dirac_solve, lm_index, random_ave_rhs, real_sph_harm)
from slagkit.errors import InputError

T, H = 20.0, 0.01
GRID = np.linspace(-T, T, int(round(2 * T / H)) + 1)


def small_grid():
    return np.linspace(-8.0, 8.0, 801)


def test_lm_index_enumerates_modes():
    idx = [lm_index(l, m) for l in range(4) for m in range(-l, l + 1)]
    assert idx == list(range(16))


def test_real_harmonics_orthonormal_under_quadrature():
    lmax = 4
    th, ph, w = ModeField.quadrature_grid(lmax)
    Y = np.array([real_sph_harm(l, m, th, ph) for l in range(lmax + 1) for m in range(-l, l + 1)])
    assert_allclose((Y * w) @ Y.T, np.eye(len(Y)), atol=1e-13)


def test_synthesize_analyze_roundtrip():
    rng = np.random.default_rng(0)
    t = np.linspace(-1, 1, 7)
    lmax = 5
    fld = ModeField.zeros(t, lmax, "oneform")
    fld["a"][:] = rng.normal(size=fld["a"].shape)
    th, ph, w = ModeField.quadrature_grid(lmax)
    vals = fld.synthesize("a", th, ph)
    back = ModeField.zeros(t, lmax, "oneform").analyze("a", vals, th, ph, w)
    assert_allclose(back["a"], fld["a"], atol=1e-13)


def test_derivative_matrix_is_skew_and_fourth_order():
    errs = []
    for n in (201, 401):
        t = np.linspace(-8, 8, n)
        D = derivative_matrix(n, t[1] - t[0])
        assert abs(D + D.T).max() == 0
        u = np.exp(-t ** 2)
        errs.append(np.abs(D @ u + 2 * t * u).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.05)


def test_mode_field_validation():
    with pytest.raises(InputError):
        ModeField.zeros(np.array([0.0, 1.0, 3.0, 4.0, 5.0]), 2, "rhs")
    with pytest.raises(InputError):
        ModeField.zeros(np.linspace(0, 1, 9), 2, "twoform")


def test_inverse_residual_random_fields():
    rng = np.random.default_rng(7)
    for _ in range(3):
        rhs = random_ave_rhs(rng, GRID, 6, band=4)
        sol = dirac_solve(rhs)
        assert (dirac_apply(sol) - rhs).norm() <= 1e-8 * rhs.norm()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_solve_inverts_apply_on_compact_fields(seed):
    rng = np.random.default_rng(seed)
    t = small_grid()
    phi = ModeField.zeros(t, 3, "oneform")
    for k in ("f", "a", "b"):
        for i in range(1, 16):
            phi[k][i] = rng.normal() * bump(t, rng.uniform(-1, 1), rng.uniform(0.5, 2))
    back = dirac_solve(dirac_apply(phi))
    assert (back - phi).norm() <= 1e-10 * phi.norm()
    # injectivity with a uniform bound
    assert phi.norm() <= 1e3 * dirac_apply(phi).norm()


@pytest.mark.parametrize("l,comp,rate", [(1, "g", math.sqrt(2)), (2, "p", math.sqrt(6))])
def test_decay_rate_of_single_mode(l, comp, rate):
    rhs = ModeField.zeros(GRID, 2, "rhs")
    rhs[comp][lm_index(l, 0)] = bump(GRID)
    sol = dirac_solve(rhs)
    mean, sides = decay_rate(sol)
    assert mean == pytest.approx(rate, abs=1e-3)
    assert sides[0] == pytest.approx(sides[1], abs=1e-6)


def test_zero_rhs_gives_zero_solution():
    rhs = ModeField.zeros(small_grid(), 3, "rhs")
    assert dirac_solve(rhs).norm() == 0.0


def test_rejects_constant_fiber_mode():
    rhs = ModeField.zeros(small_grid(), 2, "rhs")
    rhs["g"][0] = bump(rhs.t)
    with pytest.raises(InputError, match="l=0"):
        dirac_solve(rhs)
    proj, cert = ave_project(rhs)
    assert cert["removed_max"]["g"] > 0
    assert "H^1" in cert["fiber_1forms"]
    assert dirac_solve(proj).norm() == 0.0


def test_rejects_non_closed_two_form():
    rhs = ModeField.zeros(small_grid(), 2, "rhs")
    rhs["q"][lm_index(1, 0)] = bump(rhs.t)
    with pytest.raises(InputError, match="closed"):
        dirac_solve(rhs)


def test_rejects_support_outside_half_interval():
    rhs = ModeField.zeros(small_grid(), 2, "rhs")
    rhs["g"][lm_index(1, 1)] = bump(rhs.t, center=6.0)
    with pytest.raises(InputError, match="supported"):
        dirac_solve(rhs)


def test_kind_checks():
    t = small_grid()
    with pytest.raises(InputError):
        dirac_apply(ModeField.zeros(t, 1, "rhs"))
    with pytest.raises(InputError):
        dirac_solve(ModeField.zeros(t, 1, "oneform"))
