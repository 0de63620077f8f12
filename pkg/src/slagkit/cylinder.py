"""Hodge-Dirac operator d + d* on R x S^2, inverted mode by mode.

A 1-form is ``f dt + eta`` with the fiber part written through scalar
potentials, ``eta = d a + * d b`` (S^2 has no harmonic 1-forms).  Expanding
in real spherical harmonics with eigenvalue ``lam = l(l+1)``,

    d*phi = g = -f' + lam a,
    d phi = dt ^ mu + nu,  mu = d p + * d q,  nu = n vol,
    p = a' - f,  q = b',  n = -lam b.

The image 2-form is closed exactly when ``n' = -lam q``.  Inverting means
solving ``(lam - D^2) a = g - D p`` and then ``f = D a - p``,
``b = -n / lam``, where D is the skew-symmetric fourth-order central
difference on a uniform grid with zero padding, so the discrete d and d*
are exact adjoints of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import sph_harm_y

from .errors import InputError

__all__ = [
    "ModeField",
    "derivative_matrix",
    "lm_index",
    "real_sph_harm",
    "dirac_apply",
    "dirac_solve",
    "ave_project",
    "bump",
    "random_ave_rhs",
    "decay_rate",
    "ONEFORM",
    "RHS",
]

ONEFORM = ("f", "a", "b")
RHS = ("g", "p", "q", "n")


def lm_index(l, m):
    return l * l + l + m


def _lam_vector(lmax):
    return np.array([l * (l + 1) for l in range(lmax + 1) for _ in range(2 * l + 1)], dtype=float)


def real_sph_harm(l, m, theta, phi):
    """Orthonormal real spherical harmonic; theta polar, phi azimuthal."""
    if m == 0:
        return np.real(sph_harm_y(l, 0, theta, phi))
    y = sph_harm_y(l, abs(m), theta, phi)
    sign = (-1) ** abs(m)
    if m > 0:
        return np.sqrt(2.0) * sign * y.real
    return np.sqrt(2.0) * sign * y.imag


@lru_cache(maxsize=32)
def derivative_matrix(n, h):
    """Skew-symmetric fourth-order d/dt with zero padding (CSC)."""
    w = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    offsets = [-2, -1, 1, 2]
    return sp.diags([np.full(n - abs(o), c) for o, c in zip(offsets, w)], offsets,
                    shape=(n, n), format="csc")


@lru_cache(maxsize=256)
def _factor(n, h, lam):
    D = derivative_matrix(n, h)
    M = (lam * sp.identity(n, format="csc") - D @ D).tocsc()
    return splu(M)


@dataclass
class ModeField:
    """Per-mode coefficients on a uniform t-grid.

    ``kind`` is "oneform" (components f, a, b) or "rhs" (g, p, q, n).
    Every component is an array of shape ((lmax+1)^2, len(t)).
    """

    t: np.ndarray
    lmax: int
    kind: str
    comps: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.kind not in ("oneform", "rhs"):
            raise InputError("kind must be 'oneform' or 'rhs'")
        dt = np.diff(self.t)
        if len(self.t) < 5 or np.abs(dt - dt[0]).max() > 1e-9 * abs(dt[0]):
            raise InputError("t-grid must be uniform with at least 5 points")
        shape = ((self.lmax + 1) ** 2, len(self.t))
        for name in self.names:
            c = self.comps.get(name)
            self.comps[name] = np.zeros(shape) if c is None else np.array(c, dtype=float).reshape(shape)

    @property
    def names(self):
        return ONEFORM if self.kind == "oneform" else RHS

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    @property
    def lam(self):
        return _lam_vector(self.lmax)

    @classmethod
    def zeros(cls, t, lmax, kind):
        return cls(np.asarray(t), lmax, kind)

    def copy(self):
        return ModeField(self.t.copy(), self.lmax, self.kind, {k: v.copy() for k, v in self.comps.items()})

    def __getitem__(self, name):
        return self.comps[name]

    def __sub__(self, other):
        self._check_compatible(other)
        return ModeField(self.t, self.lmax, self.kind,
                         {k: self.comps[k] - other.comps[k] for k in self.names})

    def __add__(self, other):
        self._check_compatible(other)
        return ModeField(self.t, self.lmax, self.kind,
                         {k: self.comps[k] + other.comps[k] for k in self.names})

    def _check_compatible(self, other):
        if other.kind != self.kind or other.lmax != self.lmax or other.t.shape != self.t.shape:
            raise InputError("incompatible mode fields")

    def pointwise_sq(self):
        """Fiberwise squared L^2 norm as a function of t."""
        lam = self.lam[:, None]
        c = self.comps
        if self.kind == "oneform":
            dens = c["f"] ** 2 + lam * (c["a"] ** 2 + c["b"] ** 2)
        else:
            dens = c["g"] ** 2 + lam * (c["p"] ** 2 + c["q"] ** 2) + c["n"] ** 2
        return dens.sum(axis=0)

    def norm(self):
        return float(np.sqrt(self.h * self.pointwise_sq().sum()))

    # scalar synthesis and analysis ---------------------------------------------
    def synthesize(self, name, theta, phi):
        """Point values sum_lm c_lm(t) Y_lm(theta, phi): shape (len(t), len(theta))."""
        theta = np.atleast_1d(theta)
        phi = np.atleast_1d(phi)
        Y = np.array([real_sph_harm(l, m, theta, phi)
                      for l in range(self.lmax + 1) for m in range(-l, l + 1)])
        return self.comps[name].T @ Y

    @staticmethod
    def quadrature_grid(lmax):
        """Gauss-Legendre in cos(theta) times uniform phi, exact to degree 2 lmax."""
        nt = lmax + 1
        nphi = 2 * lmax + 2
        x, w = np.polynomial.legendre.leggauss(nt)
        theta = np.arccos(x)
        phi = 2 * np.pi * np.arange(nphi) / nphi
        TH, PH = np.meshgrid(theta, phi, indexing="ij")
        W = np.outer(w, np.full(nphi, 2 * np.pi / nphi))
        return TH.ravel(), PH.ravel(), W.ravel()

    def analyze(self, name, samples, theta, phi, weights):
        """Set component ``name`` from point samples (len(t), npts) by quadrature."""
        Y = np.array([real_sph_harm(l, m, theta, phi)
                      for l in range(self.lmax + 1) for m in range(-l, l + 1)])
        self.comps[name] = (np.asarray(samples) * weights[None, :]) @ Y.T
        self.comps[name] = self.comps[name].T.copy()
        return self


def dirac_apply(field):
    """Discrete (d + d*) of a 1-form field; returns the rhs field."""
    if field.kind != "oneform":
        raise InputError("dirac_apply expects a 1-form field")
    D = derivative_matrix(len(field.t), field.h)
    lam = field.lam[:, None]
    f, a, b = field["f"], field["a"], field["b"]
    Df = (D @ f.T).T
    Da = (D @ a.T).T
    Db = (D @ b.T).T
    out = ModeField(field.t, field.lmax, "rhs",
                    {"g": -Df + lam * a, "p": Da - f, "q": Db, "n": -lam * b})
    # l = 0 potentials of fiber forms carry no form
    out["p"][0] = 0.0
    out["q"][0] = 0.0
    return out


def _check_rhs(rhs, closed_tol, support_tol):
    lam = rhs.lam
    scale = max(rhs.norm(), 1e-300)
    l0 = lm_index(0, 0)
    mass = max(np.abs(rhs[k][l0]).max() for k in RHS)
    if mass > 1e-14 * max(1.0, scale):
        raise InputError(f"rhs has l=0 content (max {mass:.3g}); project with ave_project first")
    D = derivative_matrix(len(rhs.t), rhs.h)
    defect = (D @ rhs["n"].T).T + lam[:, None] * rhs["q"]
    dn = float(np.sqrt(rhs.h * (defect ** 2).sum()))
    if dn > closed_tol * scale:
        raise InputError(f"2-form part is not closed (defect {dn:.3g})")
    T = max(abs(rhs.t[0]), abs(rhs.t[-1]))
    outside = np.abs(rhs.t) > T / 2
    if outside.any():
        tail = max(np.abs(rhs[k][:, outside]).max() for k in RHS)
        if tail > support_tol * max(1.0, scale):
            raise InputError(f"rhs is not supported in [-T/2, T/2] (tail {tail:.3g})")


def dirac_solve(rhs, closed_tol=1e-10, support_tol=1e-12, check=True):
    """Invert the discrete d + d* on an ave rhs (g, p, q, n)."""
    if rhs.kind != "rhs":
        raise InputError("dirac_solve expects an rhs field")
    if check:
        _check_rhs(rhs, closed_tol, support_tol)
    n, h = len(rhs.t), rhs.h
    D = derivative_matrix(n, h)
    out = ModeField.zeros(rhs.t, rhs.lmax, "oneform")
    for l in range(1, rhs.lmax + 1):
        lam = float(l * (l + 1))
        rows = slice(lm_index(l, -l), lm_index(l, l) + 1)
        g, p, nn = rhs["g"][rows], rhs["p"][rows], rhs["n"][rows]
        r = g - (D @ p.T).T
        a = _factor(n, h, lam).solve(np.ascontiguousarray(r.T)).T
        out["a"][rows] = a
        out["f"][rows] = (D @ a.T).T - p
        out["b"][rows] = -nn / lam
    return out


def ave_project(field):
    """Remove the fiberwise constant (l = 0) part of every component.

    Returns the projected field and a certificate; fiber 1-forms need no
    projection because S^2 carries no harmonic 1-forms.
    """
    out = field.copy()
    l0 = lm_index(0, 0)
    removed = {}
    for k in out.names:
        removed[k] = float(np.abs(out[k][l0]).max())
        out[k][l0] = 0.0
    cert = {"removed_max": removed, "fiber_1forms": "no-op: H^1(S^2) = 0"}
    return out, cert


def bump(t, center=0.0, radius=1.0):
    """Smooth bump exp(-1/(1-s^2)) supported on |t - center| < radius."""
    s = (np.asarray(t, dtype=float) - center) / radius
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def random_ave_rhs(rng, t, lmax, band=None, support=2.0):
    """Random bandlimited ave rhs with an exactly closed 2-form part."""
    band = lmax if band is None else band
    field = ModeField.zeros(t, lmax, "rhs")
    D = derivative_matrix(len(t), float(t[1] - t[0]))
    for l in range(1, band + 1):
        lam = l * (l + 1)
        for m in range(-l, l + 1):
            i = lm_index(l, m)
            shapes = []
            for _ in range(3):
                c = rng.uniform(-support / 2, support / 2)
                r = rng.uniform(0.3, support / 2)
                shapes.append(rng.normal() * bump(t, c, r))
            field["g"][i] = shapes[0]
            field["p"][i] = shapes[1]
            b0 = shapes[2]
            field["q"][i] = D @ b0
            field["n"][i] = -lam * b0
    return field


def decay_rate(field, window=(3.0, 6.0)):
    """Fitted exponential decay rate of the fiberwise norm on |t| in window."""
    t = field.t
    dens = np.sqrt(field.pointwise_sq())
    rates = []
    for sgn in (1, -1):
        mask = (sgn * t >= window[0]) & (sgn * t <= window[1])
        slope = np.polyfit(np.abs(t[mask]), np.log(dens[mask]), 1)[0]
        rates.append(-slope)
    return float(np.mean(rates)), rates
