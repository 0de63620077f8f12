"""Quadratic differentials f(y) dy^2 on plane domains.

The flat metric is |f|^{1/2}|dy|.  Square roots of f are never taken
pointwise on their own: every branch value is obtained by continuing a
known value along a path, tracking the unwrapped argument of f.  The sign
that survives a closed loop is the monodromy of the vanishing cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, NonConvergence, ZeroEncountered

__all__ = [
    "Disk",
    "Rectangle",
    "QuadraticDifferential",
    "Zero",
    "PathMetrics",
    "Continuation",
    "find_zeros",
    "continue_sqrt",
    "path_metrics",
    "cone_angle",
    "segment_integral",
]


@dataclass(frozen=True)
class Disk:
    center: complex = 0j
    radius: float = math.inf

    def contains(self, y):
        return np.abs(np.asarray(y) - self.center) < self.radius


@dataclass(frozen=True)
class Rectangle:
    lower_left: complex
    upper_right: complex

    def contains(self, y):
        y = np.asarray(y)
        lo, hi = self.lower_left, self.upper_right
        return (y.real > lo.real) & (y.real < hi.real) & (y.imag > lo.imag) & (y.imag < hi.imag)


def _horner(coeffs, y):
    """Evaluate an ascending-coefficient polynomial (vectorized)."""
    out = np.zeros_like(y, dtype=complex) if isinstance(y, np.ndarray) else 0j
    for c in coeffs[::-1]:
        out = out * y + c
    return out


@dataclass(frozen=True)
class Zero:
    location: complex
    multiplicity: int
    residual: float

    def __complex__(self):
        return complex(self.location)


@dataclass(frozen=True, eq=False)
class QuadraticDifferential:
    """``f(y) dy (x) dy`` with f polynomial or rational.

    Coefficients are complex and in ascending degree.  ``excluded`` lists
    points the caller wants kept out of paths (poles are added
    automatically).
    """

    numerator: tuple
    denominator: tuple = (1.0,)
    domain: Disk | Rectangle = field(default_factory=Disk)
    excluded: tuple = ()

    def __post_init__(self):
        num = tuple(complex(c) for c in self.numerator)
        den = tuple(complex(c) for c in self.denominator)
        while len(num) > 1 and num[-1] == 0:
            num = num[:-1]
        while len(den) > 1 and den[-1] == 0:
            den = den[:-1]
        if not num or all(c == 0 for c in num):
            raise InputError("numerator is identically zero")
        if all(c == 0 for c in den):
            raise InputError("denominator is identically zero")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)
        object.__setattr__(self, "excluded", tuple(complex(p) for p in self.excluded))

    # constructors -----------------------------------------------------
    @classmethod
    def from_roots(cls, roots, scale=1.0, **kw):
        coeffs = np.array([complex(scale)])
        for r in roots:
            coeffs = np.convolve(coeffs, [-complex(r), 1.0])
        return cls(tuple(coeffs), **kw)

    @property
    def is_polynomial(self):
        return len(self.denominator) == 1

    @property
    def degree(self):
        return len(self.numerator) - 1

    # evaluation -------------------------------------------------------
    def f(self, y):
        if self.is_polynomial:
            return _horner(self.numerator, y) / self.denominator[0]
        return _horner(self.numerator, y) / _horner(self.denominator, y)

    __call__ = f

    def df(self, y):
        dn = [k * c for k, c in enumerate(self.numerator)][1:] or [0j]
        if self.is_polynomial:
            return _horner(dn, y) / self.denominator[0]
        dd = [k * c for k, c in enumerate(self.denominator)][1:] or [0j]
        p, q = _horner(self.numerator, y), _horner(self.denominator, y)
        return (_horner(dn, y) * q - p * _horner(dd, y)) / (q * q)

    def derivative(self, y, order):
        """Polynomial numerators only: the ``order``-th derivative of f."""
        c = np.array(self.numerator)
        for _ in range(order):
            c = (np.arange(len(c)) * c)[1:] if len(c) > 1 else np.array([0j])
        return _horner(tuple(c), y) / self.denominator[0]

    def coefficient_scale(self, y):
        """sum |c_k| |y|^k, the natural size against which |f(y)| is judged."""
        return _horner(tuple(abs(c) for c in self.numerator), abs(y)).real / abs(self.denominator[0]) \
            if self.is_polynomial else abs(_horner(tuple(abs(c) for c in self.numerator), abs(y)))

    def poles(self):
        if self.is_polynomial:
            return ()
        return tuple(np.roots(np.array(self.denominator[::-1])))

    def zeros(self):
        """Cached zeros inside the domain (empty for constant f)."""
        cached = self.__dict__.get("_zeros")
        if cached is None:
            cached = tuple(find_zeros(self)) if self.degree >= 1 else ()
            object.__setattr__(self, "_zeros", cached)
        return cached

    def branch_points(self):
        """Zeros and poles of odd order (where sqrt(f) changes sign)."""
        pts = [z.location for z in self.zeros() if z.multiplicity % 2]
        if not self.is_polynomial:
            den = QuadraticDifferential(self.denominator, domain=self.domain)
            pts += [z.location for z in find_zeros(den) if z.multiplicity % 2]
        return pts

    def singular_points(self):
        """All points a path must avoid: zeros, poles, declared exclusions."""
        cached = self.__dict__.get("_singular")
        if cached is None:
            cached = tuple([z.location for z in self.zeros()] + list(self.poles())
                           + list(self.excluded))
            object.__setattr__(self, "_singular", cached)
        return cached

    def scaled(self, c):
        return QuadraticDifferential(tuple(c * a for a in self.numerator), self.denominator,
                                     self.domain, self.excluded)


# --- zeros ---------------------------------------------------------------

def _deriv_scale(num, z, j):
    """Magnitude scale of the j-th derivative: sum_k |c_k| k!/(k-j)! |z|^(k-j)."""
    total = 0.0
    az = abs(z)
    for k, c in enumerate(num):
        if k >= j:
            total += abs(c) * math.perm(k, j) * az ** (k - j)
    return total


def _single_linkage(points, radius):
    clusters = []
    for r in points:
        near = [cl for cl in clusters if min(abs(r - c) for c in cl) < radius]
        merged_cl = [r] + [c for cl in near for c in cl]
        clusters = [cl for cl in clusters if not any(cl is n for n in near)] + [merged_cl]
    return clusters


def find_zeros(qd, cluster_radius=1e-7, tol=1e-12, max_iter=60, multiple_tol=1e-9):
    """Zeros of the numerator inside the domain with multiplicities.

    Roots from the companion matrix are clustered at ``cluster_radius``.
    A perturbed m-fold root spreads by about eps^(1/m), so looser groups
    are also tried: a group is merged when the first m-1 derivatives vanish
    (relative to their coefficient scale, ``multiple_tol``) at its
    centroid.  Each cluster of size m is polished by Newton iteration on
    the (m-1)-th derivative.
    """
    num = np.array(qd.numerator)
    if len(num) < 2:
        raise InputError("numerator must have degree >= 1")
    raw = np.roots(num[::-1])
    poly = QuadraticDifferential(tuple(num), domain=qd.domain)
    span = 1.0 + float(np.abs(raw).max()) if raw.size else 1.0
    clusters = []
    for group in _single_linkage(raw, 1e-3 * span):
        c = complex(np.mean(group))
        m = len(group)
        if m > 1 and all(abs(poly.derivative(c, j)) <= multiple_tol * _deriv_scale(num, c, j)
                         for j in range(m)):
            clusters.append(group)
        else:
            clusters.extend(_single_linkage(group, cluster_radius))
    merged = []
    for cl in clusters:
        m = len(cl)
        z = complex(np.mean(cl))
        res = np.inf
        for _ in range(max_iter):
            g = poly.derivative(z, m - 1)
            dg = poly.derivative(z, m)
            if dg == 0:
                break
            step = g / dg
            z -= step
            if abs(step) <= 4e-16 * max(1.0, abs(z)):
                break
        scale = max(poly.coefficient_scale(z), 1e-300)
        res = float(abs(poly.derivative(z, m - 1)) / scale)
        if res > tol:
            raise NonConvergence(f"Newton polishing of root {z} stalled at residual {res:.3g}",
                                 best=z, residuals=[res])
        merged.append(Zero(z, m, res))
    inside = [z for z in merged if bool(qd.domain.contains(z.location))]
    return sorted(inside, key=lambda z: (round(z.location.real, 12), round(z.location.imag, 12)))


# --- branch continuation -------------------------------------------------

def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class Continuation:
    points: np.ndarray        # refined sample points
    values: np.ndarray        # continued sqrt(f) at ``points``
    vertex_values: np.ndarray  # continued sqrt(f) at the input vertices
    end_sign: int


def _point_segment_distance(p, a, b):
    ab = b - a
    if ab == 0:
        return abs(p - a)
    t = ((p - a) * ab.conjugate()).real / abs(ab) ** 2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def _check_clear(qd, a, b, allow_endpoints=False, tol=1e-9):
    scale = max(1.0, abs(a), abs(b))
    for z in qd.singular_points():
        if allow_endpoints and (abs(z - a) < tol * scale or abs(z - b) < tol * scale):
            continue
        d = _point_segment_distance(z, a, b)
        if d < tol * scale:
            raise ZeroEncountered(f"segment {a}->{b} passes through singular point {z} "
                                  f"(distance {d:.3g})", location=z, zero=z)


def _principal_sign_ref(qd, y, q):
    """+1 if q is the principal square root of f(y), -1 if its negative."""
    p = np.sqrt(complex(qd.f(y)))
    return 1 if (q * p.conjugate()).real >= 0 else -1


def continue_sqrt(qd, polyline, initial_branch, max_refine=40):
    """Continue sqrt(f) along a polyline from ``initial_branch``.

    Each segment is subdivided until consecutive samples change arg f by
    less than pi/2; the branch is then read off the unwrapped argument.
    ``end_sign`` is -1 exactly when the continued branch disagrees with the
    principal-branch bookkeeping carried over from the start, so for a
    closed loop it is the monodromy sign.
    """
    pts = np.asarray(polyline, dtype=complex)
    if pts.ndim != 1 or pts.size < 2:
        raise InputError("polyline needs at least two points")
    f0 = complex(qd.f(pts[0]))
    q0 = complex(initial_branch)
    if abs(f0) == 0:
        raise ZeroEncountered("polyline starts at a zero", location=pts[0])
    if abs(q0 * q0 - f0) > 1e-8 * abs(f0):
        raise InputError("initial_branch^2 != f(start)")
    for a, b in zip(pts[:-1], pts[1:]):
        _check_clear(qd, a, b)
    samples = [pts[0]]
    args = [np.angle(f0)]
    mods = [abs(f0)]
    vertex_idx = [0]
    for a, b in zip(pts[:-1], pts[1:]):
        n = 8
        for _ in range(max_refine):
            t = np.linspace(0.0, 1.0, n + 1)
            seg = a + (b - a) * t
            fv = qd.f(seg)
            if np.any(fv == 0):
                raise ZeroEncountered("polyline hits a zero", location=seg[fv == 0][0])
            dphi = _wrap(np.diff(np.angle(fv)))
            if np.all(np.abs(dphi) < np.pi / 2):
                break
            n *= 2
        else:
            raise NonConvergence("branch continuation could not be refined")
        base = args[-1]
        cum = base + np.cumsum(dphi)
        samples.extend(seg[1:])
        args.extend(cum)
        mods.extend(np.abs(fv[1:]))
        vertex_idx.append(len(samples) - 1)
    samples = np.array(samples)
    args = np.array(args)
    mods = np.array(mods)
    sign0 = 1 if (q0 * np.exp(-0.5j * args[0])).real >= 0 else -1
    values = sign0 * np.sqrt(mods) * np.exp(0.5j * args)
    end = values[-1]
    start_rel = _principal_sign_ref(qd, pts[0], q0)
    end_rel = _principal_sign_ref(qd, pts[-1], end)
    return Continuation(samples, values, values[vertex_idx], int(start_rel * end_rel))


# --- quadrature ------------------------------------------------------------

_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.0])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])          # 15 nodes ascending
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[[9, 11, 13]] = _WG[:3][::-1]


def _align(ref, vals):
    """Sequentially continue principal square roots ``vals`` from ``ref``."""
    out = np.empty_like(vals)
    prev = ref
    for i, v in enumerate(vals):
        if (v * np.conj(prev)).real < 0:
            v = -v
        out[i] = v
        if v != 0:
            prev = v
    return out


def segment_integral(qd, a, b, q_start, zero_start=False, zero_end=False, atol=1e-12,
                     rtol=1e-13, max_panels=4000):
    """Integrate sqrt(f) dy and |sqrt(f)||dy| over the segment a -> b.

    ``q_start`` is the branch at ``a`` (or, if ``a`` is a zero, any nonzero
    complex number whose direction selects the branch just after ``a``).
    Endpoints that are zeros use the substitution ``y = zero + u^2`` so the
    integrand stays smooth.  Returns ``(Z, length, q_end, error)``.
    """
    a, b = complex(a), complex(b)
    if zero_start and zero_end:
        m = 0.5 * (a + b)
        Z1, L1, qm, e1 = segment_integral(qd, a, m, q_start, True, False, atol / 2, rtol, max_panels)
        Z2, L2, qe, e2 = segment_integral(qd, m, b, qm, False, True, atol / 2, rtol, max_panels)
        return Z1 + Z2, L1 + L2, qe, e1 + e2
    d = b - a
    if zero_start:
        path = lambda t: a + d * t * t
        dpath = lambda t: 2 * d * t
    elif zero_end:
        path = lambda t: b - d * (1 - t) ** 2
        dpath = lambda t: 2 * d * (1 - t)
    else:
        path = lambda t: a + d * t
        dpath = lambda t: d * np.ones_like(t)
    stack = [(0.0, 1.0)]
    q_ref = complex(q_start)
    Z = 0j
    L = 0.0
    err_total = 0.0
    done = 0
    while stack:
        t0, t1 = stack.pop()
        done += 1
        if done > max_panels:
            raise NonConvergence("segment quadrature exceeded panel budget", best=(Z, L),
                                 residuals=[err_total])
        half = 0.5 * (t1 - t0)
        t = t0 + half * (_NODES + 1.0)
        y = path(t)
        fv = qd.f(y)
        # branch guard: arg f must move slowly between successive nodes
        f_end = qd.f(path(np.array([t1])))[0]
        fv_all = np.concatenate([fv, [f_end]])
        f_start = qd.f(path(np.array([t0])))[0]
        mags = np.abs(np.concatenate([[f_start], fv_all]))
        # values at roundoff level next to a zero carry no phase information
        nz = mags > 1e-12 * mags.max()
        if nz.sum() >= 2 and t1 - t0 > 1e-9:
            ang = np.angle(np.concatenate([[f_start], fv_all])[nz])
            if np.any(np.abs(_wrap(np.diff(ang))) >= np.pi / 2):
                stack.extend([(0.5 * (t0 + t1), t1), (t0, 0.5 * (t0 + t1))])
                continue
        sq = _align(q_ref, np.concatenate([np.sqrt(fv), [np.sqrt(f_end)]]))
        dy = dpath(t)
        integrand = sq[:-1] * dy
        Ik = half * np.sum(_WK * integrand)
        Ig = half * np.sum(_WG15 * integrand)
        absint = np.abs(integrand)
        Lk = half * np.sum(_WK * absint)
        Lg = half * np.sum(_WG15 * absint)
        err = max(abs(Ik - Ig), abs(Lk - Lg))
        width = t1 - t0
        if err > max(atol * width, rtol * abs(Lk)) and width > 1e-14:
            mid = 0.5 * (t0 + t1)
            stack.extend([(mid, t1), (t0, mid)])
            continue
        Z += Ik
        L += Lk
        err_total += err
        q_ref = sq[-1] if sq[-1] != 0 else q_ref
    return Z, L, q_ref, err_total


@dataclass(frozen=True)
class PathMetrics:
    length: float
    Z: complex
    bps_gap: float
    error: float = 0.0

    @property
    def phase(self):
        return float(np.angle(self.Z) % (2 * np.pi))


def _is_zero_point(qd, y, rel=1e-10):
    for z in qd.zeros():
        if abs(z.location - y) <= rel * max(1.0, abs(y)):
            return True
    return False


def path_metrics(qd, polyline, initial_branch, atol=1e-9, rtol=1e-13):
    """Length, central charge and BPS gap of a polyline.

    ``length = int |sqrt f| |dy|``, ``Z = int sqrt f dy`` with the branch
    continued from ``initial_branch``.  Vertices that coincide with zeros
    of f are allowed; there ``initial_branch`` only selects a direction.
    """
    pts = np.asarray(polyline, dtype=complex)
    if pts.size < 2:
        raise InputError("polyline needs at least two points")
    is_zero = [_is_zero_point(qd, p) for p in pts]
    for a, b in zip(pts[:-1], pts[1:]):
        _check_clear(qd, a, b, allow_endpoints=True)
    nseg = len(pts) - 1
    Z, L, err = 0j, 0.0, 0.0
    q = complex(initial_branch)
    if not is_zero[0]:
        f0 = complex(qd.f(pts[0]))
        if abs(q * q - f0) > 1e-8 * max(abs(f0), 1e-300):
            raise InputError("initial_branch^2 != f(start)")
    for i, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        if a == b:
            continue
        dZ, dL, q_new, e = segment_integral(qd, a, b, q, is_zero[i], is_zero[i + 1],
                                            atol / nseg, rtol)
        if is_zero[i + 1]:
            # keep a usable direction for the next segment leaving the zero
            q_new = q_new if q_new != 0 else q
        Z += dZ
        L += dL
        err += e
        q = q_new
    return PathMetrics(float(L), complex(Z), float(L - abs(Z)), float(err))


# --- cone angle ----------------------------------------------------------

def _cone_ratio(qd, zero, r, n_angle=512, n_rad=24):
    beta = 2 * np.pi * np.arange(n_angle) / n_angle
    circle = zero + r * np.exp(1j * beta)
    circ_len = 2 * np.pi * r * np.mean(np.sqrt(np.abs(qd.f(circle))))
    # radial metric distance averaged over directions; t = r u^2 removes the
    # endpoint singularity for every multiplicity
    x, w = np.polynomial.legendre.leggauss(n_rad)
    u = 0.5 * (x + 1)
    w = 0.5 * w
    rad = np.zeros(n_angle)
    for k in range(n_rad):
        t = r * u[k] ** 2
        rad += w[k] * np.sqrt(np.abs(qd.f(zero + t * np.exp(1j * beta)))) * 2 * r * u[k]
    return circ_len / np.mean(rad)


def cone_angle(qd, zero, radius):
    """Total metric angle at ``zero`` (2 pi (m/2 + 1) for multiplicity m).

    Computed as circumference / radius of a small metric circle, with
    Richardson extrapolation in the coordinate radius.
    """
    zero = complex(zero)
    for p in qd.singular_points():
        if 0 < abs(p - zero) <= radius * (1 + 1e-12):
            raise InputError(f"ball of radius {radius} around {zero} contains singular point {p}")
    r1 = _cone_ratio(qd, zero, radius)
    r2 = _cone_ratio(qd, zero, radius / 2)
    return float(2 * r2 - r1)
