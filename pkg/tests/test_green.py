import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from slagkit.errors import InputError, NonConvergence
from slagkit.green import LogPowerSeries, fundamental_wronskian, green_function, warped_ode_solve


def _constant_source_solution(rho, rho0):
    # Delta_0 (rho^2 / 3) = 1; the homogeneous part fixes u = u' = 0 at rho0
    c2 = -4.0 * rho0 ** 1.5 / 3.0
    return rho ** 2 / 3.0 + rho0 ** 2 + c2 * np.sqrt(rho)


@pytest.mark.parametrize("callable_source", [True, False])
def test_ode_constant_source_closed_form(callable_source):
    rho0, rho1, n = 2.0, 10.0, 801
    src = (lambda r: 1.0) if callable_source else np.ones(n)
    sol = warped_ode_solve(src, rho0, rho1, n=n)
    assert_allclose(sol.u, _constant_source_solution(sol.rho, rho0), atol=1e-9)
    assert sol.u[0] == 0.0 and sol.du[0] == 0.0
    assert sol.residual < 1e-8


def test_ode_inverse_square_source_has_log_particular_part():
    sol = warped_ode_solve(lambda r: r ** -2, 2.0, 10.0)
    # u + 2 ln rho lies in the span of the fundamental solutions 1 and rho^{1/2}
    V = np.column_stack([np.ones_like(sol.rho), np.sqrt(sol.rho)])
    target = sol.u + 2 * np.log(sol.rho)
    coef, *_ = np.linalg.lstsq(V, target, rcond=None)
    assert np.abs(V @ coef - target).max() < 1e-12


def test_ode_zero_source():
    sol = warped_ode_solve(np.zeros(101), 1.0, 3.0, n=101)
    assert np.abs(sol.u).max() == 0.0


def test_ode_input_checks():
    with pytest.raises(InputError):
        warped_ode_solve(np.ones(5), 0.0, 1.0)
    with pytest.raises(InputError):
        warped_ode_solve(np.ones(5), 1.0, 2.0, n=5)
    with pytest.raises(InputError):
        warped_ode_solve(np.ones(10), 1.0, 2.0, n=11)
    bad = np.ones(11)
    bad[3] = np.nan
    with pytest.raises(InputError):
        warped_ode_solve(bad, 1.0, 2.0, n=11)


def test_wronskian_is_plus_half_rho_power():
    rho = np.linspace(2.0, 10.0, 801)
    assert_allclose(fundamental_wronskian(rho), 0.5 / np.sqrt(rho), atol=1e-10)
    sol = warped_ode_solve(np.ones(801), 2.0, 10.0)
    assert_allclose(sol.wronskian(), 0.5 / np.sqrt(sol.rho), atol=1e-10)


half_int = st.integers(-30, 6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(half_int, st.integers(0, 3), st.floats(-5, 5, allow_nan=False)), min_size=1,
                max_size=5))
def test_series_inverse_laplacian_is_exact(terms):
    s = LogPowerSeries({(k, j): c for k, j, c in terms if c != 0})
    back = s.inverse_laplace0().laplace0()
    rho = np.array([1.7, 3.0, 11.0])
    assert_allclose(back(rho), s(rho), rtol=1e-9, atol=1e-9 * max(1.0, np.abs(s(rho)).max()))


@pytest.mark.parametrize("k", [-4, -3])
def test_series_resonant_exponents_gain_a_log(k):
    s = LogPowerSeries({(k, 0): 1.0})
    inv = s.inverse_laplace0()
    assert max(j for _, j in inv.terms) == 1
    rho = np.array([2.0, 5.0])
    assert_allclose(inv.laplace0()(rho), s(rho), rtol=1e-13)


def test_series_rejects_non_half_integer_power():
    with pytest.raises(InputError):
        LogPowerSeries.power(0.3)


def test_flat_model_flux_is_two_pi():
    r = green_function(N=12)
    assert np.abs(r.flux_raw - 2 * np.pi).max() < 1e-6
    assert r.c_G == pytest.approx(1 / (2 * np.pi), rel=1e-12)
    assert np.abs(r.laplacian).max() == 0.0


@pytest.mark.parametrize("pert", [[0.5], [0.3, -0.2]])
def test_perturbed_green_decay_and_normalized_flux(pert):
    N = 12
    r = green_function(N=N, perturbation=pert)
    assert np.abs(r.flux[r.rho >= 10] - 1).max() < 1e-6
    assert r.decay_exponent <= -N * 0.9
    assert r.corrections > 0


def test_green_input_checks():
    with pytest.raises(InputError):
        green_function(N=10)
    with pytest.raises(InputError):
        green_function(A=2e3, rho_max=1e3)


def test_green_reports_non_convergence():
    with pytest.raises(NonConvergence):
        green_function(N=12, perturbation=[0.5], max_corrections=1)
