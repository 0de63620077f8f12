import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from slagkit.errors import InputError
from slagkit.local_models import (ModelPoint, PotentialField, fiber_metric_scale, fornberg_weights,
                                  kahler_form_from_potential, thimble_sl_residual, vanishing_cycle_diameter,
                                  warped_laplacian_apply, warped_rho_from_s, warped_s_from_rho,
                                  weight_functions)

cplx = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


def test_model_point_derived_quantities():
    p = ModelPoint((1.0, 0.0, 0.0))
    assert p.y_tilde == 1.0
    assert p.R == 1.0
    assert p.rho == pytest.approx(math.sqrt(1 + math.sqrt(2)))
    with pytest.raises(InputError):
        ModelPoint((1.0, 2.0))


@settings(max_examples=50, deadline=None)
@given(cplx, cplx, cplx)
def test_model_point_invariants(a, b, c):
    p = ModelPoint((a, b, c))
    assert p.consistency_defect() == 0.0
    assert p.rho >= 1.0
    assert p.y_tilde == pytest.approx(a * a + b * b + c * c)


def test_unknown_potential_rejected():
    with pytest.raises(InputError):
        PotentialField("taub_nut")


def test_euclidean_hessian_is_identity():
    r = kahler_form_from_potential(PotentialField("euclidean"), (0.3 + 0.1j, -0.2j, 1.1))
    assert_allclose(r.matrix, np.eye(3), atol=1e-8)
    assert r.hermitian_defect < 1e-8


def test_eguchi_hanson_fiber_hessian_closed_form():
    z = np.array([0.4 + 0.2j, -0.3j, 0.7])
    s = np.sum(np.abs(z) ** 2)
    d1, d2 = 0.5 * (s + 1) ** -0.5, -0.25 * (s + 1) ** -1.5
    expected = d1 * np.eye(3) + d2 * np.outer(np.conj(z), z)
    r = kahler_form_from_potential(PotentialField("eguchi_hanson_fiber"), tuple(z))
    assert_allclose(r.matrix, expected, atol=1e-8)
    assert r.min_eigenvalue > 0


@pytest.mark.parametrize("kind", ["phi_infinity", "semiflat"])
def test_model_potentials_positive_away_from_core(kind):
    r = kahler_form_from_potential(PotentialField(kind), (2.0, 0.5j, -1.0))
    assert r.min_eigenvalue > 0
    assert r.fiber_min_eigenvalue > 0


def test_real_locus_is_lagrangian():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 3)) * 2
    for kind in ("euclidean", "semiflat"):
        im_omega, w = thimble_sl_residual(PotentialField(kind), x.astype(complex))
        assert im_omega == 0.0
        assert w < 1e-8


def test_thimble_residual_strictness():
    z = np.array([[1.0, 0.5j, 0.0]])
    with pytest.raises(InputError):
        thimble_sl_residual(PotentialField("euclidean"), z)
    _, w = thimble_sl_residual(PotentialField("euclidean"), z, strict=False)
    assert w < 1e-8
    with pytest.raises(InputError):
        thimble_sl_residual(PotentialField("euclidean"), np.ones((2, 2)))


def test_euclidean_vanishing_diameter_oracle():
    # omega = i dz dzbar gives |v|^2 = 2 |v|_eucl^2: diameter pi sqrt(2 y)
    for y in (1.0, 4.0, 9.0):
        d = vanishing_cycle_diameter(y, PotentialField("euclidean"))
        assert d == pytest.approx(math.pi * math.sqrt(2 * y), rel=1e-8)


def test_semiflat_diameter_exponent():
    ys = np.geomspace(1.0, 10.0, 6)
    d = [vanishing_cycle_diameter(y) for y in ys]
    slope = np.polyfit(np.log(ys), np.log(d), 1)[0]
    assert slope == pytest.approx(0.25, abs=1e-2)
    assert fiber_metric_scale(4.0) == pytest.approx((vanishing_cycle_diameter(4.0) / math.pi) ** 2)
    with pytest.raises(InputError):
        vanishing_cycle_diameter(0.0)


def test_weight_function_bands():
    kappa = 0.25
    # z = (a, ia, 0) has ytilde = 0, so R and rho are comparable
    w, band, _ = weight_functions((3.0, 3j, 0.0), kappa)
    assert band == "outer" and w == 1.0
    w, band, _ = weight_functions((0.0, 0.0, 0.0), kappa)
    assert band == "inner"
    for z in [(1.0, 0.0, 0.0), (3.0, 1.0, 0.0), (0.3, 0.2, 0.1)]:
        w, band, ratio = weight_functions(z, kappa)
        assert 0 < w
        assert ratio > 0
    with pytest.raises(InputError):
        weight_functions((1.0, 0.0, 0.0), 0.5)


def test_fornberg_weights_exact_on_polynomials():
    x = np.array([-2.0, -1.0, 0.0, 1.5, 3.0])
    c = fornberg_weights(0.2, x, 2)
    for k in range(5):
        p = np.polynomial.Polynomial.basis(k)
        assert c[:, 0] @ p(x) == pytest.approx(p(0.2), abs=1e-12)
        assert c[:, 1] @ p(x) == pytest.approx(p.deriv(1)(0.2), abs=1e-11)
        assert c[:, 2] @ p(x) == pytest.approx(p.deriv(2)(0.2), abs=1e-10)


def test_warped_laplacian_on_monomials():
    rho = np.linspace(2.0, 10.0, 801)
    assert_allclose(warped_laplacian_apply(rho, rho ** 2), 3.0, atol=1e-8)
    lap = warped_laplacian_apply(rho, np.sqrt(rho))
    assert np.abs(lap).max() < 1e-10
    l1 = warped_laplacian_apply(rho, rho ** 2, l=1)
    assert_allclose(l1, 3.0 - 2 * rho ** 1.5, atol=1e-8)


def test_warped_laplacian_input_checks():
    with pytest.raises(InputError):
        warped_laplacian_apply(np.linspace(1, 2, 5), np.ones(5))
    with pytest.raises(InputError):
        warped_laplacian_apply(np.linspace(2, 1, 9), np.ones(9))
    with pytest.raises(InputError):
        warped_laplacian_apply(np.linspace(1, 2, 9), np.ones(8))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e4))
def test_warped_coordinate_roundtrip(s):
    assert warped_s_from_rho(warped_rho_from_s(s)) == pytest.approx(s, rel=1e-12)
