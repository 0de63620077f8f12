import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from slagkit.errors import InputError, ZeroEncountered
from slagkit.qdiff import (Disk, QuadraticDifferential, Rectangle, cone_angle, continue_sqrt, find_zeros,
                           path_metrics, segment_integral)


def circle(center, r, n=64):
    return center + r * np.exp(1j * np.linspace(0, 2 * np.pi, n))


def test_evaluation_and_derivative():
    q = QuadraticDifferential((1.0, 2.0, 3.0))
    assert q.f(2.0) == 1 + 4 + 12
    assert q.df(2.0) == 2 + 12
    assert q.degree == 2
    r = QuadraticDifferential((1.0,), (-1.0, 0.0, 1.0))
    assert r.f(2.0) == pytest.approx(1 / 3)
    assert not r.is_polynomial
    assert_allclose(sorted(complex(p).real for p in r.poles()), [-1.0, 1.0], atol=1e-14)


def test_domains():
    assert Disk(0, 1).contains(0.5j)
    assert not Disk(0, 1).contains(2)
    assert Rectangle(-1 - 1j, 1 + 1j).contains(0.9 - 0.9j)
    assert not Rectangle(-1 - 1j, 1 + 1j).contains(1.1)


def test_find_zeros_simple():
    zs = find_zeros(QuadraticDifferential((0.0, -1.0, 1.0)))
    assert [z.multiplicity for z in zs] == [1, 1]
    assert_allclose(sorted(z.location.real for z in zs), [0.0, 1.0], atol=1e-14)


def test_find_zeros_multiplicity_cluster():
    q = QuadraticDifferential.from_roots([0.3, 0.3, 0.3, -1.0])
    zs = find_zeros(q)
    mult = {round(z.location.real, 6): z.multiplicity for z in zs}
    assert mult == {0.3: 3, -1.0: 1}


def test_find_zeros_family_from_three_root_cubic():
    e3, e4, s = 0.1, 0.01, 0.3
    y1 = e3 + e4 * np.exp(1j * s)
    y2 = e3 - e4 * np.exp(1j * s)
    roots = [0, y1, y2, -2 * e3]
    zs = find_zeros(QuadraticDifferential.from_roots(roots))
    assert len(zs) == 4
    for r in roots:
        assert min(abs(z.location - r) for z in zs) < 1e-12


def test_find_zeros_respects_domain():
    q = QuadraticDifferential((0.0, -1.0, 1.0), domain=Disk(1.0, 0.5))
    assert [z.location for z in find_zeros(q)] == [pytest.approx(1.0)]


def test_monodromy_signs():
    q1 = QuadraticDifferential((0.0, 1.0))
    assert continue_sqrt(q1, circle(0, 0.5), math.sqrt(0.5)).end_sign == -1
    q2 = QuadraticDifferential((0.0, -1.0, 1.0))
    loop = circle(0.5, 1.0)
    assert continue_sqrt(q2, loop, np.sqrt(q2.f(loop[0]))).end_sign == 1
    small = circle(0.0, 0.3)
    assert continue_sqrt(q2, small, np.sqrt(q2.f(small[0]))).end_sign == -1


def test_continue_sqrt_is_continuous():
    q = QuadraticDifferential.from_roots([0.0, 1.0, 1j])
    c = continue_sqrt(q, circle(0.3 + 0.3j, 1.5, 13), np.sqrt(q.f(1.8 + 0.3j)))
    assert_allclose(c.values ** 2, q.f(c.points), rtol=1e-12, atol=1e-14)
    steps = np.abs(np.diff(np.unwrap(np.angle(q.f(c.points)))))
    assert steps.max() < np.pi / 2


def test_continue_sqrt_rejects_path_through_zero():
    q = QuadraticDifferential((0.0, 1.0))
    with pytest.raises(ZeroEncountered):
        continue_sqrt(q, [-1.0, 1.0], 1j)


def test_continue_sqrt_rejects_wrong_branch_value():
    q = QuadraticDifferential((1.0,))
    with pytest.raises(InputError):
        continue_sqrt(q, [0.0, 1.0], 2.0)


def test_beta_integral_between_zeros():
    # int_0^1 sqrt(y(y-1)) dy = i pi/8
    q = QuadraticDifferential((0.0, -1.0, 1.0))
    pm = path_metrics(q, [0.0, 1.0], 1j)
    assert_allclose(pm.Z, 1j * np.pi / 8, atol=1e-12)
    assert pm.length == pytest.approx(np.pi / 8, abs=1e-12)
    assert abs(pm.bps_gap) < 1e-12


def test_segment_integral_monomial():
    q = QuadraticDifferential((0.0, 0.0, 0.0, 0.0, 1.0))  # f = y^4, sqrt f = y^2
    Z, L, q_end, err = segment_integral(q, 0.0, 2.0, 0.0, zero_start=True)
    assert Z == pytest.approx(8 / 3, abs=1e-12)
    assert L == pytest.approx(8 / 3, abs=1e-12)


def test_semicircle_flat_metric():
    q = QuadraticDifferential((1.0,))
    arc = 0.5 - 0.5 * np.exp(-1j * np.linspace(0, np.pi, 400))
    pm = path_metrics(q, arc, 1.0)
    assert pm.length == pytest.approx(np.abs(np.diff(arc)).sum(), rel=1e-12)
    assert pm.length == pytest.approx(np.pi / 2, rel=1e-5)
    assert pm.Z == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("roots,expected", [([0.0], 3 * np.pi), ([0.0, 0.0], 4 * np.pi),
                                             ([0.0, 0.0, 0.0], 5 * np.pi)])
def test_cone_angle(roots, expected):
    q = QuadraticDifferential.from_roots(roots)
    assert cone_angle(q, 0.0, 0.5) == pytest.approx(expected, abs=1e-8)


def test_cone_angle_regular_point():
    assert cone_angle(QuadraticDifferential((1.0,)), 0.3, 0.5) == pytest.approx(2 * np.pi, abs=1e-10)


def test_cone_angle_rejects_ball_with_other_zero():
    q = QuadraticDifferential((0.0, -1.0, 1.0))
    with pytest.raises(InputError):
        cone_angle(q, 0.0, 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_bps_inequality_random_polylines(seed):
    rng = np.random.default_rng(seed)
    roots = rng.normal(size=3) + 1j * rng.normal(size=3)
    q = QuadraticDifferential.from_roots(roots)
    pts = rng.normal(size=4) + 1j * rng.normal(size=4)
    pm = path_metrics(q, pts, np.sqrt(q.f(pts[0])))
    assert pm.bps_gap >= -1e-9
    assert abs(pm.Z) <= pm.length * (1 + 1e-12) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.2, 3.0))
def test_straight_segment_of_constant_differential_is_geodesic(phi, r):
    q = QuadraticDifferential((1.0,))
    pm = path_metrics(q, [0.0, r * np.exp(1j * phi)], 1.0)
    assert pm.length == pytest.approx(r, rel=1e-12)
    assert abs(pm.bps_gap) <= 1e-12 * r


def test_scaling_covariance():
    rng = np.random.default_rng(0)
    q = QuadraticDifferential.from_roots([0.2, -0.5 + 0.1j, 1j])
    pts = np.array([1.5, 1.2 + 1.1j, -0.9 + 0.8j])
    base = path_metrics(q, pts, np.sqrt(q.f(pts[0])))
    c = 2.3
    scaled = path_metrics(q.scaled(c), pts, np.sqrt(c * q.f(pts[0])))
    assert scaled.length == pytest.approx(np.sqrt(c) * base.length, rel=1e-10)
