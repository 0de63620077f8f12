"""Geodesics of the flat metric |f|^{1/2}|dy|.

A geodesic of phase theta solves ``dy/ds = e^{i theta} / sqrt(f(y))`` with
the square root continued along the path.  Rays are integrated in batches
with an embedded Dormand-Prince 5(4) pair; the branch is advanced by
choosing, at every stage, the root nearest the value at the start of the
step, and a step is rejected when arg f moves by pi/2 or more.

Saddle connections are found by shooting from a simple zero.  Near the
target zero b the quantity ``D = int_y^b sqrt(f) dy`` is the developing
vector of b as seen from the current point, so ``Im(e^{-i theta} D)`` is
the signed amount by which the ray misses b.  Sign changes of the miss
between neighbouring launch phases bracket connections, which are then
refined by multisection.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, NonConvergence, ZeroEncountered
from .qdiff import QuadraticDifferential, continue_sqrt, path_metrics, segment_integral

__all__ = [
    "ShootConfig",
    "GeodesicPath",
    "SaddleConnection",
    "AngleResult",
    "WallScanResult",
    "shoot",
    "shoot_from_zero",
    "find_saddle_connections",
    "angle_between",
    "tangent_at_zero",
    "phase_relation_residual",
    "wall_crossing_scan",
    "closed_geodesic",
    "geodesic_residual",
    "parallel_map",
]

TWO_PI = 2 * np.pi

# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

_BE = _B5 - _B4
_COS45 = math.cos(math.pi / 4)
_B5_NZ = [j for j in range(7) if _B5[j]]
_BE_NZ = [j for j in range(7) if _BE[j]]

# outcome codes
PASS, HIT, EXIT, MAXLEN, INADMISSIBLE, STALL = range(6)
_OUTCOME_NAMES = {PASS: "target", HIT: "zero", EXIT: "exit", MAXLEN: "max_length",
                  INADMISSIBLE: "inadmissible", STALL: "stalled"}

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_TAU = 0.5 * (_GL_X + 1.0)
_TAU_W = 0.5 * _GL_W


def _wrap(a):
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


def parallel_map(fn, items):
    """Map in a thread pool of ``SLAG_THREADS`` workers; order is preserved.

    The default is the machine parallelism.
    """
    items = list(items)
    try:
        n = int(os.environ.get("SLAG_THREADS", os.cpu_count() or 1))
    except ValueError:
        n = 1
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ShootConfig:
    """Integration and search settings.

    ``hit_radius`` is in metric units; ``None`` selects 1e-3 times the
    smallest metric distance between zeros.  ``admissible`` is an optional
    predicate on the y-plane; rays leaving it stop.
    """

    theta: float = 0.0
    branch_index: int = 0
    max_length: float = 10.0
    hit_radius: Optional[float] = None
    atol: float = 1e-13
    rtol: float = 1e-11
    search_rtol: float = 1e-8
    h_min: float = 1e-14
    max_steps: int = 100000
    n_theta: int = 720
    max_depth: int = 8
    admissible: Optional[Callable] = None
    fiber_genus: int = 0

    def __post_init__(self):
        if not np.isfinite(self.max_length) or self.max_length <= 0:
            raise InputError("max_length must be finite and positive")
        if self.branch_index not in (0, 1, 2):
            raise InputError("branch_index must be 0, 1 or 2")
        if self.hit_radius is not None and self.hit_radius <= 10 * self.h_min:
            raise InputError("hit_radius must exceed 10 x the step floor")


@dataclass(frozen=True)
class GeodesicPath:
    """Sampled geodesic: points, continued sqrt(f) and metric arclength."""

    y: np.ndarray
    sqrt_f: np.ndarray
    s: np.ndarray
    theta: Optional[float]
    start: object = None
    end: object = None
    termination: str = ""
    closed: bool = False

    @property
    def length(self):
        return float(self.s[-1] - self.s[0])

    @property
    def phase(self):
        return "non-geodesic" if self.theta is None else float(self.theta % TWO_PI)

    def check_invariants(self, qd, rtol=1e-10):
        """Raise if the sample invariants are violated."""
        if np.any(np.diff(self.s) <= 0):
            raise InputError("arclength is not strictly increasing")
        q = self.sqrt_f
        nz = q != 0
        ratio = q[1:][nz[1:] & nz[:-1]] / q[:-1][nz[1:] & nz[:-1]]
        if np.any(np.abs(np.angle(ratio)) >= np.pi / 4):
            raise InputError("branch jump between samples")
        fv = qd.f(self.y)
        err = np.abs(q * q - fv)
        scale = np.maximum(np.abs(fv), 1e-300)
        bad = nz & (err > rtol * scale)
        if np.any(bad):
            raise InputError("sqrt_f^2 != f at some sample")


@dataclass(frozen=True)
class SaddleConnection:
    path: GeodesicPath
    zero_a: complex
    zero_b: complex
    central_charge: complex
    length: float
    theta: float
    branch_index: int

    @property
    def bps_gap(self):
        return self.length - abs(self.central_charge)

    @property
    def phase(self):
        return float(self.theta % TWO_PI)

    @property
    def launch(self):
        """Position theta + pi k on the circle of launch parameters at zero_a."""
        return float(self.theta + np.pi * self.branch_index)


# --- singular point bookkeeping ---------------------------------------------

@dataclass(frozen=True)
class _Singular:
    loc: np.ndarray      # locations
    order: np.ndarray    # f ~ A^2 |y - z|^order
    amp: np.ndarray      # A

    def metric_distance(self, y):
        """Local-model metric distance from each y (N,) to each point (N, K)."""
        r = np.abs(y[:, None] - self.loc[None, :])
        m = self.order[None, :]
        return 2.0 / (m + 2.0) * self.amp[None, :] * r ** ((m + 2.0) / 2.0)


def _singular_points(qd):
    cached = qd.__dict__.get("_geo_singular")
    if cached is not None:
        return cached
    locs, orders, amps = [], [], []
    for z in qd.zeros():
        m = z.multiplicity
        if qd.is_polynomial:
            a = abs(qd.derivative(z.location, m)) / math.factorial(m)
        else:
            # rational: leading local coefficient from a small circle average
            r = 1e-6 * max(1.0, abs(z.location))
            a = abs(qd.f(z.location + r)) / r ** m
        locs.append(z.location), orders.append(m), amps.append(math.sqrt(a))
    if not qd.is_polynomial:
        den = QuadraticDifferential(qd.denominator)
        for p in den.zeros():
            if p.multiplicity >= 2:
                continue  # infinitely far in the metric
            r = 1e-7 * max(1.0, abs(p.location))
            a = abs(qd.f(p.location + r)) * r
            locs.append(p.location), orders.append(-1), amps.append(math.sqrt(a))
    for e in qd.excluded:
        locs.append(e), orders.append(0), amps.append(math.sqrt(max(abs(qd.f(e)), 1e-300)))
    sing = _Singular(np.array(locs, dtype=complex), np.array(orders, dtype=float),
                     np.array(amps, dtype=float))
    object.__setattr__(qd, "_geo_singular", sing)
    return sing


def _metric_distance_between(qd, a, b):
    """Metric length of the straight segment a -> b (an upper bound on distance)."""
    from scipy.integrate import quad

    d = b - a
    pts = [float(((p - a) * np.conj(d)).real / abs(d) ** 2) for p in qd.singular_points()]
    pts = sorted(t for t in pts if 0 < t < 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, _ = quad(lambda t: math.sqrt(abs(qd.f(a + d * t))) * abs(d), 0.0, 1.0,
                      points=pts or None, limit=200)
    return val


def default_hit_radius(qd):
    cached = qd.__dict__.get("_hit_radius")
    if cached is not None:
        return cached
    zs = [z.location for z in qd.zeros()]
    if len(zs) < 2:
        return 1e-4
    d = min(_metric_distance_between(qd, a, b) for i, a in enumerate(zs) for b in zs[i + 1:])
    object.__setattr__(qd, "_hit_radius", 1e-3 * d)
    return 1e-3 * d


def _resolve_zero(qd, z):
    for zz in qd.zeros():
        if abs(zz.location - complex(z)) <= 1e-8 * max(1.0, abs(z)):
            return zz
    raise InputError(f"{z} is not a zero of the differential")


def _nearest_other(qd, z):
    others = [p for p in qd.singular_points() if abs(p - z) > 1e-12 * max(1.0, abs(z))]
    return min((abs(p - z) for p in others), default=math.inf)


# --- batch integrator -----------------------------------------------------------

def _aligned_sqrt(fv, qref):
    p = np.sqrt(fv)
    flip = (p * np.conj(qref)).real < 0
    return np.where(flip, -p, p)


def _developing(qd, y, q, b):
    """D = int_y^b sqrt(f) dy for each ray, branch continued from q at y.

    Only used within half the distance from b to any other singular point,
    where arg f varies by less than pi along the segment, so every node can
    be aligned with q directly.
    """
    d = y - b
    pts = b + d[:, None] * (_TAU ** 2)[None, :]
    p = np.sqrt(qd.f(pts))
    p = np.where((p * np.conj(q)[:, None]).real < 0, -p, p)
    return -2.0 * d * (p @ (_TAU_W * _TAU))


@dataclass
class _BatchResult:
    outcome: np.ndarray
    y: np.ndarray
    q: np.ndarray
    s: np.ndarray
    miss: np.ndarray
    D: np.ndarray
    hit_index: np.ndarray
    tracks: Optional[list] = None


def _integrate(qd, y0, q0, theta, s0, cfg, max_length, hit_radius, rtol, target=None,
               record=False, stop_at_target=True, domain_check=True):
    """Integrate a batch of rays; returns a _BatchResult."""
    y = np.array(y0, dtype=complex).copy()
    q = np.array(q0, dtype=complex).copy()
    N = len(y)
    e = np.exp(1j * np.asarray(theta, dtype=float)) * np.ones(N)
    s = np.array(s0, dtype=float) * np.ones(N)
    sing = _singular_points(qd)
    K = len(sing.loc)
    tgt_idx = -1
    if target is not None:
        tgt_idx = int(np.argmin(np.abs(sing.loc - target)))
        r_b = 0.5 * _nearest_other(qd, target)
    # initial step: a fraction of the metric distance to the nearest singular point
    if K:
        h = 0.05 * np.min(sing.metric_distance(y), axis=1)
    else:
        h = np.full(N, 1e-3 * max_length)
    h = np.clip(np.minimum(h, max_length - s), 1e-12, None)
    outcome = np.full(N, -1)
    miss = np.full(N, np.nan)
    D = np.full(N, np.nan + 0j)
    hit_index = np.full(N, -1)
    active = np.ones(N, dtype=bool)
    tracks = None
    if record:
        tracks = [[(y[i], q[i], s[i])] for i in range(N)]
    atol = cfg.atol
    steps = 0
    while active.any():
        steps += 1
        if steps > cfg.max_steps:
            outcome[active] = STALL
            break
        idx = np.nonzero(active)[0]
        yi, qi, hi, ei = y[idx], q[idx], h[idx], e[idx]
        ks = [ei / qi]
        ok = np.ones(len(idx), dtype=bool)
        aq = np.abs(qi) * _COS45
        for st in range(1, 7):
            ys = yi + hi * sum(a * ks[j] for j, a in enumerate(_A[st]) if a)
            fv = qd.f(ys)
            qs = _aligned_sqrt(fv, qi)
            # |arg(qs / qi)| < pi/4, i.e. arg f moved by less than pi/2
            ok &= (qs * np.conj(qi)).real > aq * np.abs(qs)
            ks.append(ei / np.where(qs == 0, 1e-300, qs))
        qstage = qs
        y5 = yi + hi * sum(_B5[j] * ks[j] for j in _B5_NZ)
        err = np.abs(hi * sum(_BE[j] * ks[j] for j in _BE_NZ)) * np.abs(qi)
        tol = atol + rtol * hi
        acc = ok & (err <= tol) & np.isfinite(err)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = 0.9 * (tol / err) ** 0.2
        fac = np.clip(np.where(np.isfinite(fac), fac, np.where(err == 0, 5.0, 0.2)), 0.2, 5.0)
        fac = np.where(ok, fac, 0.25)
        h_next = hi * np.where(acc, np.minimum(fac, 5.0), np.minimum(fac, 0.5))
        # accepted steps
        a_idx = idx[acc]
        y_new = y5[acc]
        q_new = qstage[acc]
        s_new = s[a_idx] + hi[acc]
        if domain_check and a_idx.size:
            inside = np.asarray(qd.domain.contains(y_new), dtype=bool)
            if cfg.admissible is not None:
                adm = np.array([bool(cfg.admissible(v)) for v in y_new])
                newly_inad = inside & ~adm
                outcome[a_idx[newly_inad]] = INADMISSIBLE
                active[a_idx[newly_inad]] = False
                inside &= adm
            exited = ~inside
            outcome[a_idx[exited & (outcome[a_idx] < 0)]] = EXIT
            active[a_idx[exited]] = False
            keep = inside
            a_idx, y_new, q_new, s_new = a_idx[keep], y_new[keep], q_new[keep], s_new[keep]
            h_next_acc = h_next[acc][keep]
        else:
            h_next_acc = h_next[acc]
        y[a_idx], q[a_idx], s[a_idx] = y_new, q_new, s_new
        if record:
            for i, yy, qq, ss in zip(a_idx, y_new, q_new, s_new):
                tracks[i].append((yy, qq, ss))
        if a_idx.size:
            # target bookkeeping
            if target is not None:
                near = np.abs(y_new - target) < r_b
                if near.any():
                    nidx = a_idx[near]
                    Dn = _developing(qd, y_new[near], q_new[near], target)
                    D[nidx] = Dn
                    along = (Dn * np.conj(e[nidx])).real
                    md = np.abs((Dn * np.conj(e[nidx])).imag)
                    m_here = (Dn * np.conj(e[nidx])).imag
                    passed = (along <= 0) | (np.abs(Dn) < hit_radius)
                    miss[nidx] = m_here
                    if stop_at_target:
                        done = nidx[passed]
                        outcome[done] = PASS
                        active[done] = False
            # other zero hits
            if K:
                dist = sing.metric_distance(y_new)
                if tgt_idx >= 0 and stop_at_target:
                    dist[:, tgt_idx] = np.inf
                close = dist < hit_radius
                hit_any = close.any(axis=1) & active[a_idx]
                if hit_any.any():
                    hidx = a_idx[hit_any]
                    outcome[hidx] = HIT
                    hit_index[hidx] = np.argmin(dist[hit_any], axis=1)
                    active[hidx] = False
            reached = (s_new >= max_length * (1 - 1e-15)) & active[a_idx]
            outcome[a_idx[reached]] = MAXLEN
            active[a_idx[reached]] = False
        # step sizes
        h[idx] = h_next
        if a_idx.size:
            h[a_idx] = h_next_acc
        h[idx] = np.minimum(h[idx], np.maximum(max_length - s[idx], 0.0))
        stalled = active & (h < cfg.h_min)
        if stalled.any():
            outcome[stalled] = STALL
            active[stalled] = False
    return _BatchResult(outcome, y, q, s, miss, D, hit_index, tracks)


def _track_to_path(track, theta, start=None, end=None, termination=""):
    arr = np.array(track, dtype=object)
    y = np.array([t[0] for t in track], dtype=complex)
    q = np.array([t[1] for t in track], dtype=complex)
    s = np.array([t[2] for t in track], dtype=float)
    return GeodesicPath(y, q, s, None if theta is None else float(theta % TWO_PI), start, end,
                        termination)


# --- public shooting ----------------------------------------------------------

def shoot(qd, start, initial_branch, theta, config=None):
    """Integrate a geodesic of phase ``theta`` from a regular point."""
    cfg = config or ShootConfig(theta=theta)
    start = complex(start)
    f0 = complex(qd.f(start))
    if f0 == 0:
        raise InputError("start is a zero; use shoot_from_zero")
    q0 = complex(initial_branch)
    if abs(q0 * q0 - f0) > 1e-10 * abs(f0):
        raise InputError("initial_branch^2 != f(start)")
    hr = cfg.hit_radius if cfg.hit_radius is not None else default_hit_radius(qd)
    res = _integrate(qd, [start], [q0], theta, 0.0, cfg, cfg.max_length, hr, cfg.rtol, record=True)
    term = _OUTCOME_NAMES.get(int(res.outcome[0]), "stalled")
    end = None
    if res.outcome[0] == HIT:
        end = complex(_singular_points(qd).loc[res.hit_index[0]])
    if res.outcome[0] == STALL:
        sing = _singular_points(qd)
        loc = sing.loc[np.argmin(np.abs(sing.loc - res.y[0]))] if len(sing.loc) else None
        raise ZeroEncountered(f"step underflow at {res.y[0]}", location=complex(res.y[0]), zero=loc)
    return _track_to_path(res.tracks[0], theta, start, end, term)


def _launch(qd, zero, theta, k, s0):
    """First point on the ray of phase theta, sheet k, at metric distance s0."""
    a = complex(zero)
    c = np.sqrt(complex(qd.df(a)))
    if c == 0:
        raise InputError("zero is not simple")
    theta = np.asarray(theta, dtype=float)
    k = np.asarray(k)
    phi = (2.0 / 3.0) * (theta - np.angle(c)) + TWO_PI * k / 3.0
    r = (1.5 * s0 / abs(c)) ** (2.0 / 3.0)
    u = r * np.exp(1j * phi)
    target = np.exp(1j * theta) * s0
    y = a + u
    # branch: e^{i theta}/q must point along u
    q = np.sqrt(qd.f(y))
    q = np.where((np.exp(1j * theta) / q * np.conj(u)).real < 0, -q, q)
    # Newton polish on G(y) = int_a^y sqrt f = e^{i theta} s0
    for _ in range(8):
        G = _developing(qd, np.atleast_1d(y), np.atleast_1d(q), a)
        G = -G  # developing integrates y -> a
        step = (G - target) / q
        y = y - step
        q = _aligned_sqrt(qd.f(y), q)
        if np.all(np.abs(step) <= 1e-15 * (abs(a) + r)):
            break
    return y, q


def shoot_from_zero(qd, zero, branch_index, theta, config=None, s0=None):
    """Geodesic of phase ``theta`` leaving the simple zero on sheet ``branch_index``.

    The launch direction is ``(2/3)(theta - arg c) + 2 pi k / 3`` where
    ``c^2 = f'(zero)``; the first piece is placed analytically and polished
    by Newton iteration before ordinary integration takes over.
    """
    cfg = config or ShootConfig(theta=theta, branch_index=branch_index)
    z = _resolve_zero(qd, zero)
    if z.multiplicity != 1:
        raise InputError("shoot_from_zero needs a simple zero")
    hr = cfg.hit_radius if cfg.hit_radius is not None else default_hit_radius(qd)
    if s0 is None:
        s0 = 4.0 * hr
    y, q = _launch(qd, z.location, np.array([theta]), np.array([branch_index]), s0)
    res = _integrate(qd, y, q, theta, s0, cfg, cfg.max_length, hr, cfg.rtol, record=True)
    track = [(z.location, 0j, 0.0)] + res.tracks[0]
    end = None
    if res.outcome[0] == HIT:
        end = complex(_singular_points(qd).loc[res.hit_index[0]])
    term = _OUTCOME_NAMES.get(int(res.outcome[0]), "stalled")
    return _track_to_path(track, theta, z.location, end, term)


# --- saddle connection search -------------------------------------------------------

def _scan(qd, za, zb, Theta, cfg, length_bound, hr, rtol):
    Theta = np.asarray(Theta, dtype=float) % (3 * np.pi)
    k = np.floor(Theta / np.pi).astype(int) % 3
    theta = Theta - np.pi * k
    s0 = 4.0 * hr
    y, q = _launch(qd, za, theta, k, s0)
    return _integrate(qd, y, q, theta, s0, cfg, length_bound, hr, rtol, target=zb)


def _outcome_key(res, i):
    o = int(res.outcome[i])
    if o == HIT:
        return (HIT, int(res.hit_index[i]))
    return (o, 0)


def _refine(qd, za, zb, lo, hi, m_lo, m_hi, cfg, length_bound, hr, scale):
    """Bracketed root of the miss between launch parameters lo and hi.

    Each round shoots the regula falsi estimate and two close neighbours,
    then keeps the tightest bracket among rays that still pass the target.
    Coarse tolerances are used while the bracket is wide.
    """
    tol = 1e-13 * max(scale, 1e-300)
    best = None
    for _ in range(60):
        width = hi - lo
        frac = m_lo / (m_lo - m_hi) if m_lo != m_hi else 0.5
        frac = min(max(frac, 1e-3), 1 - 1e-3)
        x = lo + frac * width
        d = max(0.02 * width, 1e-16)
        pts = np.array([x - d, x, x + d])
        pts = pts[(pts > lo) & (pts < hi)]
        if pts.size == 0:
            break
        rtol = cfg.search_rtol if width > 1e-5 else cfg.rtol
        res = _scan(qd, za, zb, pts, cfg, length_bound, hr, rtol)
        grid = np.concatenate([[lo], pts, [hi]])
        outs = np.concatenate([[PASS], res.outcome, [PASS]])
        ms = np.concatenate([[m_lo], res.miss, [m_hi]])
        if rtol == cfg.rtol:
            for j, o in enumerate(res.outcome):
                if o == PASS and (best is None or abs(res.miss[j]) < abs(best[1])):
                    best = (pts[j], res.miss[j])
            if best is not None and (abs(best[1]) < tol or width < 1e-14):
                return best
        found = False
        for j in range(len(grid) - 1):
            if outs[j] == PASS and outs[j + 1] == PASS and np.sign(ms[j]) != np.sign(ms[j + 1]):
                lo, hi, m_lo, m_hi = grid[j], grid[j + 1], ms[j], ms[j + 1]
                found = True
                break
        if not found:
            break
    return best


def _close_to_target(qd, zb, y_last, q_last, D, theta, n=6):
    """Points of the geodesic between y_last and the zero zb by Newton inversion."""
    pts, qs = [], []
    y_prev, q_prev = y_last, q_last
    for t in np.linspace(0.0, 1.0, n + 1)[1:-1]:
        goal = -D * (1.0 - t)             # int_b^y sqrt f along the geodesic
        y = zb + (y_prev - zb) * ((1.0 - t) / max(1.0 - t + 1.0 / n, 1e-300)) ** (2.0 / 3.0)
        q = _aligned_sqrt(qd.f(np.array([y])), np.array([q_prev]))[0]
        for _ in range(30):
            G = -_developing(qd, np.array([y]), np.array([q]), zb)[0]
            step = (G - goal) / q
            y = y - step
            q = _aligned_sqrt(qd.f(np.array([y])), np.array([q]))[0]
            if abs(step) <= 1e-15 * (1 + abs(y)):
                break
        pts.append(y)
        qs.append(q)
        y_prev, q_prev = y, q
    return pts, qs


def _build_connection(qd, za, zb, Theta, cfg, length_bound, hr):
    Theta = float(Theta % (3 * np.pi))
    k = int(Theta // np.pi) % 3
    theta = Theta - np.pi * k
    s0 = 4.0 * hr
    y, q = _launch(qd, za, np.array([theta]), np.array([k]), s0)
    res = _integrate(qd, y, q, theta, s0, cfg, length_bound, hr, cfg.rtol, target=zb, record=True)
    if res.outcome[0] != PASS:
        return None
    track = res.tracks[0]
    y_last, q_last, s_last = track[-1]
    D = _developing(qd, np.array([y_last]), np.array([q_last]), zb)[0]
    ext_y, ext_q = _close_to_target(qd, zb, y_last, q_last, D, theta)
    sD = abs(D)
    ds = sD / (len(ext_y) + 1)
    full = [(za, 0j, 0.0)] + list(track)
    for j, (yy, qq) in enumerate(zip(ext_y, ext_q)):
        full.append((yy, qq, s_last + (j + 1) * ds))
    full.append((zb, 0j, s_last + sD))
    path = _track_to_path(full, theta, za, zb, "target")
    # central charge by quadrature along the sampled path (homotopic to the geodesic)
    pm = path_metrics(qd, path.y, path.sqrt_f[1], atol=1e-12)
    length = float(s_last + sD)
    return SaddleConnection(path, za, zb, pm.Z, length, theta, k)


def find_saddle_connections(qd, zero_a, zero_b, length_bound, config=None, window=None):
    """Saddle connections from ``zero_a`` to ``zero_b`` of length <= length_bound.

    Launch phases are sampled on [0, pi) for each of the three sheets at the
    simple zero, treated as one circle of length 3 pi.  ``window`` restricts
    the scan to an interval of that circle.
    """
    cfg = config or ShootConfig()
    za = _resolve_zero(qd, zero_a)
    zb = _resolve_zero(qd, zero_b)
    if abs(za.location - zb.location) == 0:
        raise InputError("zero_a and zero_b must differ")
    if za.multiplicity != 1 or zb.multiplicity != 1:
        raise InputError("saddle connections are only searched between simple zeros")
    a, b = za.location, zb.location
    hr = cfg.hit_radius if cfg.hit_radius is not None else default_hit_radius(qd)
    if window is None:
        n = 3 * cfg.n_theta
        grid = np.arange(n) * (3 * np.pi / n)
        circular = True
    else:
        lo, hi = window
        grid = np.linspace(lo, hi, max(int(cfg.n_theta * (hi - lo) / np.pi), 16))
        circular = False
    res = _scan(qd, a, b, grid, cfg, length_bound, hr, cfg.search_rtol)
    vals = [(_outcome_key(res, i), res.miss[i]) for i in range(len(grid))]
    pairs = [((grid[i], vals[i]), (grid[i + 1], vals[i + 1])) for i in range(len(grid) - 1)]
    if circular:
        pairs.append(((grid[-1], vals[-1]), (grid[0] + 3 * np.pi, vals[0])))
    # level-by-level subdivision between differing non-passing outcomes,
    # which can hide a narrow window of rays passing the target
    brackets = []
    for depth in range(cfg.max_depth + 1):
        todo = []
        for (t0, (k0, m0)), (t1, (k1, m1)) in pairs:
            if k0[0] == PASS and k1[0] == PASS:
                if np.sign(m0) != np.sign(m1):
                    brackets.append((t0, t1, m0, m1))
            elif k0[0] != PASS and k1[0] != PASS and k0 != k1 and depth < cfg.max_depth:
                todo.append(((t0, (k0, m0)), (t1, (k1, m1))))
        if not todo:
            break
        mids = np.array([0.5 * (p[0][0] + p[1][0]) for p in todo])
        r = _scan(qd, a, b, mids, cfg, length_bound, hr, cfg.search_rtol)
        pairs = []
        for i, (left, right) in enumerate(todo):
            mid = (mids[i], (_outcome_key(r, i), r.miss[i]))
            pairs.extend([(left, mid), (mid, right)])
    scale = max(abs(_metric_distance_between(qd, a, b)), 1e-300)
    found = []
    for (t0, t1, m0, m1) in sorted(brackets):
        best = _refine(qd, a, b, t0, t1, m0, m1, cfg, length_bound, hr, scale)
        if best is None or abs(best[1]) > max(1e-9 * scale, hr * 1e-6):
            continue
        conn = _build_connection(qd, a, b, best[0], cfg, length_bound, hr)
        if conn is None or conn.length > length_bound * (1 + 1e-12):
            continue
        dup = False
        for other in found:
            if abs(other.central_charge - conn.central_charge) <= 1e-6 * max(abs(conn.central_charge), 1e-300):
                dup = True
                break
            da = _wrap(np.angle(other.path.y[1] - a) - np.angle(conn.path.y[1] - a))
            if abs(da) < 1e-6:
                dup = True
                break
        if not dup:
            found.append(conn)
    return sorted(found, key=lambda c: c.length)


# --- residuals and angles -------------------------------------------------------

def geodesic_residual(qd, path, zero_start=None, zero_end=None):
    """max |arg(Delta w e^{-i theta})| over consecutive sample chords.

    ``Delta w`` is the integral of sqrt(f) over the chord with the path's
    branch; on a true geodesic it equals ``e^{i theta} Delta s`` exactly.
    """
    if path.theta is None:
        raise InputError("path has no phase")
    y, q = path.y, path.sqrt_f
    zs = q == 0
    e = np.exp(-1j * path.theta)
    worst = 0.0
    for i in range(len(y) - 1):
        ref = q[i] if q[i] != 0 else q[i + 1]
        dw, _, _, _ = segment_integral(qd, y[i], y[i + 1], ref, bool(zs[i]), bool(zs[i + 1]),
                                       atol=1e-15, rtol=1e-14)
        if dw == 0:
            continue
        worst = max(worst, abs(np.angle(dw * e)))
    return worst


@dataclass(frozen=True)
class AngleResult:
    psi_coordinate: float
    psi_metric: float
    psi_ccw: float


def angle_between(qd, zero, dir1, dir2):
    """Unsigned coordinate angle between two tangent directions at a zero.

    ``psi_metric = (3/2) psi_coordinate`` is the corresponding metric angle
    at a simple zero; ``psi_ccw`` is the counterclockwise angle from dir2
    to dir1 in [0, 2 pi).
    """
    z = _resolve_zero(qd, zero)
    if z.multiplicity != 1:
        raise InputError("angle_between needs a simple zero")
    d1, d2 = complex(dir1), complex(dir2)
    if d1 == 0 or d2 == 0:
        raise InputError("zero direction")
    ccw = float(np.angle(d1 / d2) % TWO_PI)
    if ccw > TWO_PI - 1e-15:
        ccw = 0.0
    psi = min(ccw, TWO_PI - ccw)
    return AngleResult(psi, 1.5 * psi, ccw)


def _outgoing(conn, zero):
    """(phase, branch reference sign) of a connection viewed as leaving ``zero``."""
    if abs(conn.zero_a - zero) < 1e-12 * max(1, abs(zero)):
        return conn.theta, conn.path.y[1], conn.path.sqrt_f[1], 1.0
    if abs(conn.zero_b - zero) < 1e-12 * max(1, abs(zero)):
        return conn.theta + np.pi, conn.path.y[-2], conn.path.sqrt_f[-2], -1.0
    raise InputError("connection does not end at the given zero")


def _point_at_distance(qd, zero, theta_out, y_guess, q_guess, t):
    """Point at metric distance t from zero on the ray of outgoing phase theta_out."""
    goal = np.exp(1j * theta_out) * t
    d = y_guess - zero
    t_guess = abs(_developing(qd, np.array([y_guess]), np.array([q_guess]), zero)[0])
    y = zero + d * (t / max(t_guess, 1e-300)) ** (2 / 3)
    q = _aligned_sqrt(qd.f(np.array([y])), np.array([q_guess]))[0]
    for _ in range(50):
        G = -_developing(qd, np.array([y]), np.array([q]), zero)[0]
        step = (G - goal) / q
        y = y - step
        q = _aligned_sqrt(qd.f(np.array([y])), np.array([q]))[0]
        if abs(step) <= 1e-16 * (1 + abs(y)):
            break
    return y, q


def tangent_at_zero(qd, conn, zero, t0=None):
    """Unit coordinate tangent of ``conn`` leaving ``zero`` (Richardson in t^{2/3})."""
    theta_out, y1, q1, orient = _outgoing(conn, zero)
    # branch on the outgoing ray: sqrt f dy/ds = e^{i theta_out}
    if t0 is None:
        t0 = 1e-6 * conn.length
    ya, qa = _point_at_distance(qd, zero, theta_out, y1, q1 * orient * orient, t0)
    yb, qb = _point_at_distance(qd, zero, theta_out, ya, qa, t0 / 4)
    a1 = np.angle(ya - zero)
    a2 = a1 + _wrap(np.angle(yb - zero) - a1)
    R = 4 ** (2 / 3)
    ang = (R * a2 - a1) / (R - 1)
    return np.exp(1j * ang), (yb, qb)


def phase_relation_residual(qd, conn1, conn2, shared):
    """wrap(theta1_bar - theta2 - (3/2) psi) at the shared simple zero.

    ``theta1_bar`` is the phase of conn1 leaving the shared zero, expressed
    in the branch obtained by continuing conn2's branch counterclockwise
    through the angle psi from conn2's tangent to conn1's.
    """
    shared = complex(shared)
    th1, _, _, _ = _outgoing(conn1, shared)
    th2, _, _, _ = _outgoing(conn2, shared)
    d1, (p1, q1) = tangent_at_zero(qd, conn1, shared)
    d2, (p2, q2) = tangent_at_zero(qd, conn2, shared)
    ang = angle_between(qd, shared, d1, d2)
    psi = ang.psi_ccw
    r2, r1 = abs(p2 - shared), abs(p1 - shared)
    b2 = np.angle(p2 - shared)
    betas = b2 + np.linspace(0.0, psi, 64)
    radii = np.linspace(r2, r1, 64)
    arc = shared + radii * np.exp(1j * betas)
    arc[0], arc[-1] = p2, p1
    cont = continue_sqrt(qd, arc, q2)
    sigma = 1.0 if (cont.values[-1] * np.conj(q1)).real > 0 else -1.0
    th1_bar = th1 + (0.0 if sigma > 0 else np.pi)
    return float(_wrap(th1_bar - th2 - 1.5 * psi)), ang


# --- wall crossing -------------------------------------------------------------------

@dataclass
class WallScanResult:
    s_grid: np.ndarray
    psi: np.ndarray
    exists_direct: np.ndarray
    s_star: Optional[float]
    consistent: bool
    failures: list = field(default_factory=list)
    lengths: np.ndarray = None
    phase_residuals: np.ndarray = None
    psi_star: Optional[float] = None


def _pick(conns, prev_Z):
    if not conns:
        return None
    if prev_Z is None:
        return conns[0]
    return min(conns, key=lambda c: min(abs(c.central_charge - prev_Z), abs(c.central_charge + prev_Z)))


def _references(qd, ends, cfg, prev):
    e1, shared, e2 = ends
    out = []
    for j, (u, v) in enumerate([(e1, shared), (shared, e2)]):
        bound = 3.0 * _metric_distance_between(qd, u, v) + 1e-12
        conns = []
        if prev is not None:
            # track the previous launch parameter before falling back to a full scan
            c0 = prev[j]
            conns = find_saddle_connections(qd, u, v, bound, cfg,
                                            window=(c0.launch - 0.15, c0.launch + 0.15))
        if not conns:
            conns = find_saddle_connections(qd, u, v, bound, cfg)
        c = _pick(conns, None if prev is None else prev[j].central_charge)
        if c is None:
            return None
        out.append(c)
    return out


def _psi_at(qd, ends, refs):
    e1, shared, e2 = ends
    d1, _ = tangent_at_zero(qd, refs[0], shared)
    d2, _ = tangent_at_zero(qd, refs[1], shared)
    return angle_between(qd, shared, d1, d2).psi_coordinate


def _direct_exists(qd, ends, refs, cfg):
    e1, shared, e2 = ends
    L = refs[0].length + refs[1].length
    Z1, Z2 = refs[0].central_charge, refs[1].central_charge
    conns = find_saddle_connections(qd, e1, e2, L * (1 + 1e-9), cfg)
    cands = [s1 * Z1 + s2 * Z2 for s1 in (1, -1) for s2 in (1, -1)]
    for c in conns:
        for zc in cands:
            if abs(c.central_charge - zc) <= 1e-6 * abs(zc) or abs(c.central_charge + zc) <= 1e-6 * abs(zc):
                return True, c
    return False, None


def wall_crossing_scan(family, s_values, selector, config=None, bisect_tol=1e-3):
    """Scan a one-parameter family for the appearance of a direct connection.

    ``family(s)`` returns a QuadraticDifferential and ``selector(qd, s)``
    returns ``(end1, shared, end2)``.  At each s the two reference
    connections end1-shared and shared-end2 are found, psi is their angle at
    the shared zero, and the direct connection end1-end2 in the class of
    their concatenation is searched independently.
    """
    cfg = config or ShootConfig()
    s_values = np.asarray(list(s_values), dtype=float)
    qd0 = family(float(s_values[0]))
    if len(qd0.zeros()) < 3:
        raise InputError("wall crossing needs three zeros (shared-vertex configuration)")

    def evaluate(s, prev=None):
        qd = family(float(s))
        ends = tuple(complex(v) for v in selector(qd, float(s)))
        refs = _references(qd, ends, cfg, prev)
        if refs is None:
            return None
        psi = _psi_at(qd, ends, refs)
        return qd, ends, refs, psi

    psis, exists, lengths, failures = [], [], [], []
    ref_at = {}
    prev = None
    for s in s_values:
        ev = evaluate(s, prev)
        if ev is None:
            psis.append(np.nan), exists.append(False), lengths.append(np.nan)
            failures.append(float(s))
            prev = None
            continue
        qd, ends, refs, psi = ev
        prev = refs
        ref_at[float(s)] = refs
        ok, _ = _direct_exists(qd, ends, refs, cfg)
        psis.append(psi), exists.append(ok)
        lengths.append(refs[0].length + refs[1].length)
    psis = np.array(psis)
    exists = np.array(exists, dtype=bool)
    target = 2 * np.pi / 3
    s_star = psi_star = None
    g = psis - target
    for i in range(len(s_values) - 1):
        if np.isfinite(g[i]) and np.isfinite(g[i + 1]) and np.sign(g[i]) != np.sign(g[i + 1]):
            lo, hi, glo = s_values[i], s_values[i + 1], g[i]
            best = (lo, glo) if abs(glo) < abs(g[i + 1]) else (hi, g[i + 1])
            near = ref_at[float(lo)]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                ev = evaluate(mid, near)
                if ev is None:
                    failures.append(float(mid))
                    break
                gm = ev[3] - target
                if abs(gm) < abs(best[1]):
                    best = (mid, gm)
                if abs(gm) < bisect_tol and hi - lo < 1e-3:
                    break
                if np.sign(gm) == np.sign(glo):
                    lo, glo, near = mid, gm, ev[2]
                else:
                    hi = mid
            s_star = float(best[0])
            psi_star = float(best[1] + target)
            break
    consistent = True
    for s, p, ex in zip(s_values, psis, exists):
        if not np.isfinite(p):
            continue
        if s_star is not None and abs(s - s_star) <= 1e-2:
            continue
        if ex != (p < target):
            consistent = False
    return WallScanResult(s_values, psis, exists, s_star, consistent, failures, np.array(lengths),
                          psi_star=psi_star)


# --- closed geodesics ------------------------------------------------------------

def _polygon_length(qd, pts, nodes=16):
    x, w = np.polynomial.legendre.leggauss(nodes)
    a = pts
    b = np.roll(pts, -1)
    t = 0.5 * (x + 1)
    y = a[:, None] + (b - a)[:, None] * t[None, :]
    return float(np.sum(0.5 * w[None, :] * np.sqrt(np.abs(qd.f(y))) * np.abs(b - a)[:, None]))


def closed_geodesic(qd, ring_spec, config=None, n_control=48):
    """Closed geodesic encircling the two branch points in ``ring_spec``.

    The length of a closed polygon around the pair is minimised over radial
    control points; the polygon then fixes the central charge Z of the
    class, and the geodesic is obtained by shooting with phase arg Z from
    the polygon's crossing of the symmetry axis beyond the second point.
    """
    from scipy.optimize import minimize

    cfg = config or ShootConfig()
    if cfg.fiber_genus >= 1:
        raise InputError("loops with fibers of genus >= 1 are not certified")
    p1, p2 = (complex(v) for v in ring_spec)
    bps = qd.branch_points()
    if len(bps) == 0:
        raise InputError("no branch points: no admissible ring")
    for p in (p1, p2):
        if min(abs(p - b) for b in bps) > 1e-8 * max(1, abs(p)):
            raise InputError(f"{p} is not a branch point")
    center = 0.5 * (p1 + p2)
    half = 0.5 * (p2 - p1)
    rot = half / abs(half)
    others = [b for b in qd.singular_points() if min(abs(b - p1), abs(b - p2)) > 1e-9]
    r_max = min([abs(b - center) for b in others], default=math.inf) / abs(half)
    beta = TWO_PI * np.arange(n_control) / n_control
    r_init = min(2.0, 0.5 * (1 + r_max))

    def pts_of(logr):
        r = 1.0 + np.exp(logr)
        return center + abs(half) * rot * r * np.exp(1j * beta)

    x0 = np.full(n_control, np.log(r_init - 1.0))
    bound_hi = np.log(r_max - 1.0) - 1e-3 if np.isfinite(r_max) else None
    res = minimize(lambda v: _polygon_length(qd, pts_of(v)), x0, method="L-BFGS-B",
                   bounds=[(None, bound_hi)] * n_control)
    poly = pts_of(res.x)
    # Z2 centering: start on the axis beyond p2
    x_start = poly[0]
    q0 = np.sqrt(complex(qd.f(x_start)))
    closed = np.concatenate([poly, poly[:1]])
    pm = path_metrics(qd, closed, q0, atol=1e-12)
    theta = float(np.angle(pm.Z) % TWO_PI)
    length = abs(pm.Z)
    scfg = replace(cfg, max_length=length, rtol=min(cfg.rtol, 1e-12), atol=min(cfg.atol, 1e-14))
    hr = 1e-12
    out = _integrate(qd, [x_start], [q0], theta, 0.0, scfg, length, hr, scfg.rtol,
                     record=True, domain_check=False)
    path = _track_to_path(out.tracks[0], theta, x_start, x_start, "closed")
    gap = abs(path.y[-1] - x_start)
    if out.outcome[0] != MAXLEN or gap > 1e-8 * max(1.0, abs(x_start)):
        raise NonConvergence(f"closed geodesic did not close (gap {gap:.3g})", best=path,
                             residuals=[gap, res.fun])
    return replace(path, closed=True, termination=f"closed gap {gap:.3g}")
