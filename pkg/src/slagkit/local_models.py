"""The C^3 Lefschetz model ytilde = z1^2 + z2^2 + z3^2.

Model Kahler potentials, their complex Hessians by finite differences,
special Lagrangian checks on the real locus, vanishing-cycle diameters and
the warped Laplacian ``d^2/drho^2 + (1/2rho) d/drho - l(l+1) rho^{-1/2}``.

Conventions: ``R = (sum |z_i|^2)^{1/4}`` and
``rho = sqrt(|ytilde|^2 + sqrt(R^4 + 1))``; the Hermitian matrix is
``g_{jk} = d^2 phi / dz_j dzbar_k`` and the Kahler form is
``omega = i g_{jk} dz_j ^ dzbar_k``.  Only points with rho >= 2 are used by
default, since the model smooths R and rho on a compact set in an
unspecified way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NonConvergence

__all__ = [
    "ModelPoint",
    "PotentialField",
    "HessianResult",
    "kahler_form_from_potential",
    "thimble_sl_residual",
    "vanishing_cycle_diameter",
    "fiber_metric_scale",
    "weight_functions",
    "warped_laplacian_apply",
    "warped_rho_from_s",
    "warped_s_from_rho",
    "fornberg_weights",
    "POTENTIAL_KINDS",
]


def _derived(z):
    z = np.asarray(z, dtype=complex)
    yt = np.sum(z * z, axis=-1)
    r4 = np.sum(np.abs(z) ** 2, axis=-1)
    rho = np.sqrt(np.abs(yt) ** 2 + np.sqrt(r4 + 1.0))
    return yt, r4, rho


@dataclass(frozen=True)
class ModelPoint:
    """A point of C^3 with its derived quantities."""

    z: tuple
    y_tilde: complex = field(init=False)
    R: float = field(init=False)
    rho: float = field(init=False)

    def __post_init__(self):
        z = tuple(complex(v) for v in self.z)
        if len(z) != 3:
            raise InputError("a model point has three complex coordinates")
        object.__setattr__(self, "z", z)
        yt, r4, rho = _derived(np.array(z))
        object.__setattr__(self, "y_tilde", complex(yt))
        object.__setattr__(self, "R", float(r4 ** 0.25))
        object.__setattr__(self, "rho", float(rho))

    def consistency_defect(self):
        yt, r4, rho = _derived(np.array(self.z))
        return max(abs(yt - self.y_tilde), abs(r4 ** 0.25 - self.R), abs(rho - self.rho))


POTENTIAL_KINDS = ("phi_infinity", "semiflat", "eguchi_hanson_fiber", "euclidean")


@dataclass(frozen=True)
class PotentialField:
    """One of the model potentials, vectorised over the last axis of z."""

    kind: str

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise InputError(f"unknown potential {self.kind!r}; expected one of {POTENTIAL_KINDS}")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        yt, r4, rho = _derived(z)
        ay = np.abs(yt)
        if self.kind == "euclidean":
            return r4
        if self.kind == "eguchi_hanson_fiber":
            return np.sqrt(r4 + 1.0)
        if self.kind == "semiflat":
            return 0.5 * ay ** 2 + np.sqrt(r4 + ay)
        return 0.5 * ay ** 2 + np.sqrt(r4 + rho)


# fourth-order stencils
_D1 = (np.array([-2, -1, 1, 2]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)
_D2 = (np.array([-2, -1, 0, 1, 2]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0)


def _real_hessian(phi, x, h):
    """6x6 real Hessian of phi at the real vector x (fourth order).

    Both orders of every mixed partial are assembled separately, so the
    asymmetry of the result exposes a failing stencil.
    """
    n = len(x)
    offsets, weights = [], []
    index = []
    for a in range(n):
        for b in range(n):
            if a == b:
                for o, w in zip(*_D2):
                    e = np.zeros(n)
                    e[a] = o * h
                    offsets.append(e), weights.append(w / h ** 2), index.append((a, a))
            else:
                for oa, wa in zip(*_D1):
                    for ob, wb in zip(*_D1):
                        e = np.zeros(n)
                        e[a], e[b] = oa * h, ob * h
                        offsets.append(e), weights.append(wa * wb / h ** 2), index.append((a, b))
    pts = x[None, :] + np.array(offsets)
    # stencil weights sum to zero; removing the centre value limits cancellation
    vals = phi(pts[:, :3] + 1j * pts[:, 3:]) - phi(x[:3] + 1j * x[3:])
    H = np.zeros((n, n))
    for (a, b), w, v in zip(index, weights, vals):
        H[a, b] += w * v
    return H


@dataclass(frozen=True)
class HessianResult:
    matrix: np.ndarray
    hermitian_defect: float
    min_eigenvalue: float
    fiber_min_eigenvalue: float
    step: float


def _fiber_frame(z):
    """Orthonormal basis (3x2, complex) of {v : sum z_j v_j = 0}."""
    n = np.conj(np.asarray(z, dtype=complex))
    if np.linalg.norm(n) == 0:
        return np.eye(3, dtype=complex)[:, 1:]
    n = n / np.linalg.norm(n)
    # complete to a unitary basis and drop the normal
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(3)]))
    return q[:, 1:3]


def kahler_form_from_potential(potential, point, h=None, tol=1e-8):
    """Hermitian matrix ``g_{jk} = d^2 phi / dz_j dzbar_k`` by finite differences.

    The step defaults to ``1e-4 (1 + |z|)``.  Raises NonConvergence when the
    assembled matrix fails to be Hermitian to ``tol`` (relative).
    """
    if not isinstance(point, ModelPoint):
        point = ModelPoint(tuple(point))
    z = np.array(point.z)
    if h is None:
        h = 1e-4 * (1.0 + np.linalg.norm(z))
    x = np.concatenate([z.real, z.imag])
    H = _real_hessian(potential, x, h)
    Hxx, Hyy, Hxy = H[:3, :3], H[3:, 3:], H[:3, 3:]
    g = 0.25 * (Hxx + Hyy + 1j * (Hxy - Hxy.T))
    defect = float(np.abs(g - g.conj().T).max() / max(np.abs(g).max(), 1e-300))
    if defect > tol:
        raise NonConvergence(f"stencil failure: Hermitian defect {defect:.3g}",
                             best=g, residuals=[defect])
    g = 0.5 * (g + g.conj().T)
    eig = np.linalg.eigvalsh(g)
    F = _fiber_frame(z)
    feig = np.linalg.eigvalsh(F.conj().T @ g @ F)
    return HessianResult(g, defect, float(eig[0]), float(feig[0]), float(h))


def thimble_sl_residual(potential, samples, omega_scale=1.0, strict=True, h=None):
    """Residuals of ImOmega and omega on the tangent frame of the real locus.

    The frame is the real coordinate frame d/dx_1, d/dx_2, d/dx_3; ``Omega``
    is ``omega_scale dz_1 ^ dz_2 ^ dz_3``.  With ``strict=False`` samples off
    the real locus are accepted and the same frame is used there, which is
    how the first-order response to an offset is measured.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    if samples.shape[-1] != 3:
        raise InputError("samples must be points of C^3")
    if strict and np.abs(samples.imag).max() >= 1e-14:
        raise InputError("samples are not on the real locus")
    im_omega = abs(complex(omega_scale).imag)  # Omega(e1, e2, e3) = scale * det(I)
    worst = 0.0
    for z in samples:
        g = kahler_form_from_potential(potential, ModelPoint(tuple(z)), h=h).matrix
        # omega(d/dx_j, d/dx_k) = i (g_jk - g_kj) = -2 Im g_jk for Hermitian g
        w = -2.0 * g.imag
        worst = max(worst, float(np.abs(w).max()))
    return im_omega, worst


def _riemannian(g, v):
    """Squared length of real tangent vectors v (..., 3) for omega = i g dz dzbar."""
    return 2.0 * np.real(np.einsum("...j,jk,...k->...", v, g, np.conj(v)))


def vanishing_cycle_diameter(y_tilde, potential=None, n_nodes=16):
    """Induced diameter of the sphere {x real, |x|^2 = ytilde} in its fiber.

    The metric is symmetric under real rotations, so the diameter is the
    length of a great semicircle, integrated with Gauss-Legendre nodes.
    """
    if potential is None:
        potential = PotentialField("semiflat")
    y_tilde = float(y_tilde)
    if not y_tilde > 0:
        raise InputError("y_tilde must be positive")
    r = math.sqrt(y_tilde)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    t = 0.5 * np.pi * (x + 1.0)
    total = 0.0
    for tk, wk in zip(t, w):
        p = r * np.array([math.cos(tk), math.sin(tk), 0.0])
        v = r * np.array([-math.sin(tk), math.cos(tk), 0.0])
        g = kahler_form_from_potential(potential, ModelPoint(tuple(p))).matrix
        total += 0.5 * np.pi * wk * math.sqrt(_riemannian(g, v))
    return total


def fiber_metric_scale(y_tilde, potential=None):
    """(diameter / pi)^2, the squared radius of the round vanishing sphere."""
    return (vanishing_cycle_diameter(y_tilde, potential) / np.pi) ** 2


def weight_functions(point, kappa):
    """The three-band weight w and its band label.

    Between the stated bands the weight is filled in continuously by
    ``max(kappa^-2 rho^-3/4, min(1, R/(kappa rho)))`` and labelled
    "transition"; ``ratio`` reports how far the two neighbouring band
    formulas disagree there.
    """
    if not 0 < kappa <= 0.25:
        raise InputError("kappa must lie in (0, 1/4]")
    if not isinstance(point, ModelPoint):
        point = ModelPoint(tuple(point))
    R, rho = point.R, point.rho
    inner = kappa ** -2 * rho ** -0.75
    middle = R / (kappa * rho)
    if R >= 2 * kappa * rho:
        return 1.0, "outer", 1.0
    if kappa ** -1 * rho ** 0.25 < R < kappa * rho:
        return middle, "middle", 1.0
    if R < 0.5 * kappa ** -1 * rho ** 0.25:
        return inner, "inner", 1.0
    w = max(inner, min(1.0, middle))
    if R >= kappa * rho:
        ratio = 1.0 / middle
    else:
        ratio = middle / inner
    return w, "transition", ratio


# --- warped radial model ----------------------------------------------------------

def fornberg_weights(x0, x, m):
    """Finite-difference weights for derivatives 0..m at x0 on nodes x."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def warped_laplacian_apply(rho, u, l=0):
    """Apply ``u'' + u'/(2 rho) - l(l+1) rho^{-1/2} u`` on a rho-grid.

    Fourth-order finite differences: five-point stencils inside, seven-point
    one-sided stencils in the two boundary layers.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if rho.ndim != 1 or len(rho) < 7:
        raise InputError("grid too coarse: need at least 7 points")
    if np.any(rho <= 0) or np.any(np.diff(rho) <= 0):
        raise InputError("rho-grid must be positive and strictly increasing")
    if u.shape != rho.shape:
        raise InputError("u must be sampled on the grid")
    n = len(rho)
    out = np.empty(n)
    for i in range(n):
        if 2 <= i <= n - 3:
            sl = slice(i - 2, i + 3)
        elif i < 2:
            sl = slice(0, 7)
        else:
            sl = slice(n - 7, n)
        # weights in units of the local spacing keep the offsets O(1)
        hloc = (rho[sl][-1] - rho[sl][0]) / (len(rho[sl]) - 1)
        c = fornberg_weights(0.0, (rho[sl] - rho[i]) / hloc, 2)
        d1 = c[:, 1] @ u[sl] / hloc
        d2 = c[:, 2] @ u[sl] / hloc ** 2
        out[i] = d2 + d1 / (2 * rho[i]) - l * (l + 1) * rho[i] ** -0.5 * u[i]
    return out


def warped_rho_from_s(s):
    """rho = R^4 = (3 s / 4)^{4/3} along the thimble."""
    return (0.75 * np.asarray(s, dtype=float)) ** (4.0 / 3.0)


def warped_s_from_rho(rho):
    return (4.0 / 3.0) * np.asarray(rho, dtype=float) ** 0.75
