import numpy as np
import pytest
from numpy.testing import assert_allclose

from slagkit.errors import InputError
from slagkit.geodesics import (ShootConfig, angle_between, closed_geodesic, find_saddle_connections,
                               geodesic_residual, phase_relation_residual, shoot, shoot_from_zero)
from slagkit.qdiff import Disk, QuadraticDifferential


@pytest.fixture(scope="module")
def beta_connection():
    q = QuadraticDifferential((0.0, -1.0, 1.0))
    return q, find_saddle_connections(q, 0.0, 1.0, 10.0)


def test_shoot_constant_differential_is_straight_line():
    q = QuadraticDifferential((1.0,))
    theta = 0.7
    path = shoot(q, 0.0, 1.0, theta, ShootConfig(theta=theta, max_length=2.0))
    assert path.termination == "max_length"
    assert path.length == pytest.approx(2.0, rel=1e-12)
    assert_allclose(path.y[-1], 2.0 * np.exp(1j * theta), atol=1e-10)
    path.check_invariants(q)


def test_shoot_monomial_oracle():
    # f = y: w = (2/3) y^{3/2}, so the phase-theta ray from y0 = 1 is explicit
    q = QuadraticDifferential((0.0, 1.0))
    theta = 0.3
    path = shoot(q, 1.0, 1.0, theta, ShootConfig(theta=theta, max_length=1.0))
    w_end = 2.0 / 3.0 + np.exp(1j * theta) * path.length
    assert_allclose(path.y[-1], (1.5 * w_end) ** (2.0 / 3.0), rtol=1e-10)


def test_shoot_rejects_zero_and_bad_branch():
    q = QuadraticDifferential((0.0, 1.0))
    with pytest.raises(InputError):
        shoot(q, 0.0, 1.0, 0.0)
    with pytest.raises(InputError):
        shoot(q, 4.0, 3.0, 0.0)


def test_shoot_config_validation():
    with pytest.raises(InputError):
        ShootConfig(max_length=float("inf"))
    with pytest.raises(InputError):
        ShootConfig(branch_index=3)
    with pytest.raises(InputError):
        ShootConfig(hit_radius=1e-14)


def test_shoot_from_zero_leaves_at_cone_directions():
    q = QuadraticDifferential((0.0, 1.0))
    for k in range(3):
        path = shoot_from_zero(q, 0.0, k, 0.0, ShootConfig(max_length=0.5))
        expected = 2 * np.pi * k / 3  # theta = 0, arg f'(0) = 0
        assert np.angle(path.y[-1] * np.exp(-1j * expected)) == pytest.approx(0.0, abs=1e-9)
        assert path.start == 0.0


def test_beta_integral_connection(beta_connection):
    q, conns = beta_connection
    assert len(conns) == 1
    c = conns[0]
    assert abs(c.central_charge) == pytest.approx(np.pi / 8, abs=1e-6)
    assert c.phase == pytest.approx(np.pi / 2, abs=1e-6)
    assert c.bps_gap <= 1e-6 * c.length
    assert geodesic_residual(q, c.path, zero_start=True, zero_end=True) < 1e-8
    c.path.check_invariants(q)


def test_connection_search_rejects_bad_endpoints():
    q = QuadraticDifferential.from_roots([0.0, 0.0, 1.0])
    with pytest.raises(InputError):
        find_saddle_connections(q, 1.0, 1.0, 5.0)
    with pytest.raises(InputError):
        find_saddle_connections(q, 0.0, 1.0, 5.0)


def test_angle_between_sign_conventions():
    q = QuadraticDifferential((0.0, 1.0))
    r = angle_between(q, 0.0, 1.0, 1j)
    assert r.psi_coordinate == pytest.approx(np.pi / 2)
    assert r.psi_metric == pytest.approx(1.5 * np.pi / 2)


@pytest.mark.parametrize("roots", [[0.0, 1.0, 1j], [0.0, 1.0, 0.5 + 0.8j], [0.0, 1.0, -0.3 + 0.6j]])
def test_phase_relation_at_shared_zero(roots):
    q = QuadraticDifferential.from_roots(roots)
    c1 = find_saddle_connections(q, roots[0], roots[1], 5.0)
    c2 = find_saddle_connections(q, roots[0], roots[2], 5.0)
    assert c1 and c2
    for a in c1:
        for b in c2:
            res, _ = phase_relation_residual(q, a, b, roots[0])
            assert abs(res) < 1e-5


def test_closed_geodesic_contour_oracle():
    q = QuadraticDifferential((1.0,), (-1.0, 0.0, 1.0))
    path = closed_geodesic(q, (-1.0, 1.0))
    # the period of 1/sqrt(y^2 - 1) around both branch points is 2 pi
    assert path.closed
    assert path.length == pytest.approx(2 * np.pi, abs=1e-6)
    assert geodesic_residual(q, path) < 1e-7
    assert abs(path.y[-1] - path.y[0]) < 1e-8


def test_closed_geodesic_rejects_non_branch_points():
    q = QuadraticDifferential((1.0,), (-1.0, 0.0, 1.0))
    with pytest.raises(InputError):
        closed_geodesic(q, (-1.0, 0.5))


def _two_zero_perturbed(rng):
    a, b = 0.5 * (rng.normal(size=2) + 1j * rng.normal(size=2))
    while True:
        c = 0.2 * (rng.normal() + 1j * rng.normal())
        if abs(c) < 0.4:  # third zero -1/c stays outside the disk
            break
    num = np.polymul(np.poly([a, b]), [c, 1.0])[::-1]
    return QuadraticDifferential(tuple(num), domain=Disk(0.0, 2.0)), a, b


@pytest.mark.parametrize("seed", range(3))
def test_uniqueness_on_perturbed_two_zero_differentials(seed):
    q, a, b = _two_zero_perturbed(np.random.default_rng(seed))
    assert len(q.zeros()) == 2
    conns = find_saddle_connections(q, a, b, 10.0)
    assert len(conns) <= 1
    for c in conns:
        assert c.bps_gap <= 1e-6 * c.length
