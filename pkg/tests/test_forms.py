import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from slagkit.errors import InputError
from slagkit.forms import (AlternatingForm, FlatCalibrationModel, calibration_phase, graph_deformation_F,
                           hodge_star, linearization_identity_residual, linearization_ratios,
                           linearized_F, symplectic_dual)

coeff = st.floats(-10, 10, allow_nan=False)


def random_form(rng, degree, dim):
    keys = itertools.combinations(range(dim), degree)
    return AlternatingForm(degree, dim, {k: rng.normal() for k in keys})


def test_basis_sign_and_repeated_index():
    assert AlternatingForm.basis((1, 0), 2)[(0, 1)] == -1.0
    assert AlternatingForm.basis((0, 0), 2).norm() == 0.0


def test_rejects_unsorted_keys():
    with pytest.raises(InputError):
        AlternatingForm(2, 3, {(1, 0): 1.0})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 3), st.integers(0, 3))
def test_wedge_graded_commutative(seed, p, q):
    rng = np.random.default_rng(seed)
    a, b = random_form(rng, p, 6), random_form(rng, q, 6)
    assert (a ^ b).allclose((-1) ** (p * q) * (b ^ a), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_wedge_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_form(rng, k, 5) for k in (1, 2, 1))
    assert ((a ^ b) ^ c).allclose(a ^ (b ^ c), atol=1e-10)


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_hodge_star_squares_to_sign(d):
    rng = np.random.default_rng(d)
    for k in range(d + 1):
        a = random_form(rng, k, d)
        assert hodge_star(hodge_star(a)).allclose((-1) ** (k * (d - k)) * a, atol=1e-12)


def test_hodge_star_defining_identity_nonflat_metric():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(4, 4))
    g = M @ M.T + 4 * np.eye(4)
    a, b = random_form(rng, 2, 4), random_form(rng, 2, 4)
    lhs = (b ^ hodge_star(a, g))[(0, 1, 2, 3)]
    from slagkit.forms import _compound
    G2, keys = _compound(np.linalg.inv(g), 2)
    inner = np.array([b[k] for k in keys]) @ G2 @ np.array([a[k] for k in keys])
    assert_allclose(lhs, inner * math.sqrt(np.linalg.det(g)), rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_normalization_identity(n):
    assert FlatCalibrationModel(n).normalization_defect() < 1e-12


def test_symplectic_dual_pairs_back():
    m = FlatCalibrationModel(3)
    eta = AlternatingForm.from_covector(np.arange(1.0, 7.0))
    V = symplectic_dual(eta, m)
    for j in range(6):
        e = np.zeros(6)
        e[j] = 1
        assert_allclose(m.omega0.evaluate(np.vstack([V, e])), eta.to_vector()[j], atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.lists(coeff, min_size=3, max_size=3))
def test_linearization_identity_random(c):
    m = FlatCalibrationModel(3)
    eta = AlternatingForm.from_covector(np.array(c))
    assert linearization_identity_residual(eta, m) <= 1e-12 * max(1.0, np.abs(c).max())


def test_linearization_identity_rejects_normal_components():
    m = FlatCalibrationModel(2)
    with pytest.raises(InputError):
        linearization_identity_residual(AlternatingForm.from_covector([0, 0, 1.0, 0]), m)


def test_calibration_phase_of_rotated_plane():
    m = FlatCalibrationModel(3)
    assert calibration_phase(np.hstack([np.eye(3), np.zeros((3, 3))]), m).theta == pytest.approx(0.0, abs=1e-14)
    # e^{i t} R^3 has phase 3t
    t = 0.2
    frame = np.hstack([math.cos(t) * np.eye(3), math.sin(t) * np.eye(3)])
    r = calibration_phase(frame, m)
    assert r.lagrangian
    assert r.theta == pytest.approx(3 * t, abs=1e-12)


def test_calibration_phase_detects_symplectic_plane():
    m = FlatCalibrationModel(2)
    frame = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])  # span(d/dx1, d/dy1)
    r = calibration_phase(frame, m)
    assert not r.lagrangian
    assert r.defect == pytest.approx(1.0)


def test_graph_F_vanishes_for_zero_and_linearizes():
    h = 0.05
    x = np.arange(-8, 9) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    u = np.sin(X) * np.cos(2 * Y)
    z0, t0 = graph_deformation_F(np.zeros_like(u), h)
    assert np.abs(z0).max() == 0.0
    eps = (1e-2, 1e-3, 1e-4)
    ratios = linearization_ratios(u, h, eps)
    # bounded as eps -> 0; the quadratic term of F vanishes at the flat
    # model, so the remainder is cubic and ratio / eps is what stabilizes
    assert all(r2 <= r1 for r1, r2 in zip(ratios, ratios[1:]))
    cubic = [r / e for r, e in zip(ratios, eps)]
    assert max(cubic) / min(cubic) < 1.01
    lz, lt = linearized_F(u, h)
    assert all(np.abs(v).max() == 0 for v in lt.values())


def test_graph_F_two_form_vanishes_for_gradient_deformation():
    # a gradient deformation stays Lagrangian: f^* omega_0 = 0 exactly
    h = 0.1
    x = np.arange(-6, 7) * h
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    u = 0.3 * X * Y + np.sin(Z) * X
    _, two = graph_deformation_F(u, h)
    assert max(np.abs(v).max() for v in two.values()) < 1e-12


def test_graph_F_quadratic_potential_closed_form():
    h = 0.1
    x = np.arange(-5, 6) * h
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    H = np.array([[0.5, 0.2, 0.0], [0.2, -0.3, 0.1], [0.0, 0.1, 0.8]])
    P = np.stack([X, Y, Z], axis=-1)
    u = 0.5 * np.einsum("...i,ij,...j->...", P, H, P)
    zero, _ = graph_deformation_F(u, h)
    # gauge x -> x - i grad u: tangent frame I - iH
    expected = np.linalg.det(np.eye(3) - 1j * H).imag / math.sqrt(np.linalg.det(np.eye(3) + H @ H))
    assert_allclose(zero, expected, atol=1e-12)
