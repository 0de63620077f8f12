"""Exact multilinear algebra on R^{2n} for the flat calibration model.

Coordinates on R^{2n} are ordered ``(x_1..x_n, y_1..y_n)`` with
``z_j = x_j + i y_j``.  The flat model uses

    omega_0 = sum_j dx_j ^ dy_j,     Omega_0 = dz_1 ^ ... ^ dz_n,

and ``f^j = -J e^j`` with ``e^j = dx_j``; under the dual action
``alpha -> alpha o J`` this gives ``f^j = dy_j``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "AlternatingForm",
    "FlatCalibrationModel",
    "CalibrationResult",
    "hodge_star",
    "symplectic_dual",
    "linearization_identity_residual",
    "calibration_phase",
    "graph_deformation_F",
    "linearized_F",
    "linearization_ratios",
]

def _perm_sign(seq):
    """Sign of the permutation sorting ``seq`` (0 if it has repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class AlternatingForm:
    """Alternating k-form on R^dim with dense coefficients.

    ``coefficients`` maps strictly increasing index tuples to reals; the
    form is ``sum_I c_I e^I``.  Missing keys are zero.
    """

    degree: int
    dim: int
    coefficients: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.degree < 0 or (self.degree > self.dim and self.coefficients):
            raise InputError(f"degree {self.degree} outside 0..{self.dim}")
        clean = {}
        for key, val in dict(self.coefficients).items():
            key = tuple(int(i) for i in key)
            if len(key) != self.degree or any(a >= b for a, b in zip(key, key[1:])):
                raise InputError(f"coefficient key {key} is not a strictly increasing {self.degree}-tuple")
            if key and not (0 <= key[0] and key[-1] < self.dim):
                raise InputError(f"index out of range in {key}")
            val = float(val)
            if val != 0.0:
                clean[key] = val
        object.__setattr__(self, "coefficients", clean)

    # construction -----------------------------------------------------
    @classmethod
    def zero(cls, degree, dim):
        return cls(degree, dim, {})

    @classmethod
    def constant(cls, value, dim):
        return cls(0, dim, {(): value})

    @classmethod
    def basis(cls, indices, dim):
        """The monomial ``e^{i_1} ^ ... ^ e^{i_k}`` (any order, signed)."""
        indices = tuple(indices)
        sign = _perm_sign(indices)
        if sign == 0:
            return cls.zero(len(indices), dim)
        return cls(len(indices), dim, {tuple(sorted(indices)): float(sign)})

    @classmethod
    def from_covector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(1, vec.size, {(i,): v for i, v in enumerate(vec)})

    # arithmetic -------------------------------------------------------
    def _check(self, other):
        if self.dim != other.dim or self.degree != other.degree:
            raise InputError("forms of different degree or dimension")

    def __add__(self, other):
        self._check(other)
        out = dict(self.coefficients)
        for k, v in other.coefficients.items():
            out[k] = out.get(k, 0.0) + v
        return AlternatingForm(self.degree, self.dim, out)

    def __neg__(self):
        return AlternatingForm(self.degree, self.dim, {k: -v for k, v in self.coefficients.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return AlternatingForm(self.degree, self.dim, {k: scalar * v for k, v in self.coefficients.items()})

    __rmul__ = __mul__

    def __getitem__(self, key):
        return self.coefficients.get(tuple(key), 0.0)

    def wedge(self, other):
        if self.dim != other.dim:
            raise InputError("dimension mismatch in wedge")
        deg = self.degree + other.degree
        out = {}
        for a, ca in self.coefficients.items():
            for b, cb in other.coefficients.items():
                sign = _perm_sign(a + b)
                if sign:
                    key = tuple(sorted(a + b))
                    out[key] = out.get(key, 0.0) + sign * ca * cb
        return AlternatingForm(deg, self.dim, out)

    __xor__ = wedge

    def interior(self, vector):
        """Contraction ``iota(V) self`` in the first slot."""
        vector = np.asarray(vector, dtype=float)
        if self.degree == 0:
            raise InputError("cannot contract a 0-form")
        out = {}
        for idx, c in self.coefficients.items():
            for pos, i in enumerate(idx):
                if vector[i] != 0.0:
                    key = idx[:pos] + idx[pos + 1:]
                    out[key] = out.get(key, 0.0) + (-1) ** pos * vector[i] * c
        return AlternatingForm(self.degree - 1, self.dim, out)

    def evaluate(self, vectors):
        """Value on ``degree`` vectors (rows of ``vectors``)."""
        vecs = np.asarray(vectors, dtype=float).reshape(self.degree, self.dim)
        total = 0.0
        for idx, c in self.coefficients.items():
            total += c * np.linalg.det(vecs[:, idx]) if idx else c
        return float(total)

    def pullback(self, matrix):
        """Pull back along the linear map R^m -> R^dim given by ``matrix`` (dim x m)."""
        matrix = np.asarray(matrix, dtype=float)
        m = matrix.shape[1]
        out = {}
        for key in itertools.combinations(range(m), self.degree):
            cols = matrix[:, key]
            val = self.evaluate(cols.T) if self.degree else self.coefficients.get((), 0.0)
            out[key] = val
        return AlternatingForm(self.degree, m, out)

    def to_vector(self):
        keys = list(itertools.combinations(range(self.dim), self.degree))
        return np.array([self[k] for k in keys])

    def norm(self):
        """Euclidean coefficient norm (the standard norm for orthonormal coframes)."""
        return math.sqrt(sum(v * v for v in self.coefficients.values()))

    def allclose(self, other, atol=1e-13):
        return (self - other).norm() <= atol


def _compound(matrix, k):
    """k-th compound matrix (k x k minors, lexicographic index order)."""
    d = matrix.shape[0]
    keys = list(itertools.combinations(range(d), k))
    if k == 0:
        return np.ones((1, 1)), keys
    out = np.empty((len(keys), len(keys)))
    for a, I in enumerate(keys):
        for b, J in enumerate(keys):
            out[a, b] = np.linalg.det(matrix[np.ix_(I, J)])
    return out, keys


def hodge_star(form, metric=None, orientation=1):
    """Riemannian Hodge star of a constant-coefficient form.

    ``*a`` is defined by ``b ^ *a = <b, a> vol`` with
    ``vol = orientation * sqrt(det g) e^1 ^ ... ^ e^d``.
    """
    d = form.dim
    g = np.eye(d) if metric is None else np.asarray(metric, dtype=float)
    if g.shape != (d, d) or not np.allclose(g, g.T, atol=1e-14):
        raise InputError("metric must be a symmetric d x d matrix")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise InputError("metric is not positive definite")
    if orientation not in (1, -1):
        raise InputError("orientation must be +1 or -1")
    k = form.degree
    ginv_k, keys = _compound(np.linalg.inv(g), k)
    raised = ginv_k @ np.array([form[I] for I in keys])
    scale = orientation * math.sqrt(np.linalg.det(g))
    out = {}
    full = tuple(range(d))
    for I, c in zip(keys, raised):
        if c == 0.0:
            continue
        comp = tuple(i for i in full if i not in I)
        out[comp] = out.get(comp, 0.0) + scale * _perm_sign(I + comp) * c
    return AlternatingForm(d - k, d, out)


@dataclass(frozen=True)
class FlatCalibrationModel:
    """omega_0, Omega_0 and J on C^n = R^{2n}."""

    n: int
    omega0: AlternatingForm = field(init=False)
    Omega0_re: AlternatingForm = field(init=False)
    Omega0_im: AlternatingForm = field(init=False)
    J: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n
        if not 1 <= n <= 4:
            raise InputError("complex dimension must be in 1..4")
        d = 2 * n
        omega = AlternatingForm.zero(2, d)
        for j in range(n):
            omega = omega + AlternatingForm.basis((j, n + j), d)
        # expand prod_j (dx_j + i dy_j), tracking i^{#dy}
        re, im = {}, {}
        for choice in itertools.product((0, 1), repeat=n):
            idx = tuple(j + n * c for j, c in enumerate(choice))
            val = _perm_sign(idx) * (1, 1j, -1, -1j)[sum(choice) % 4]
            key = tuple(sorted(idx))
            re[key] = re.get(key, 0.0) + complex(val).real
            im[key] = im.get(key, 0.0) + complex(val).imag
        J = np.zeros((d, d))
        for j in range(n):
            J[n + j, j] = 1.0   # J dx_j-direction -> dy_j-direction
            J[j, n + j] = -1.0
        object.__setattr__(self, "omega0", omega)
        object.__setattr__(self, "Omega0_re", AlternatingForm(n, d, re))
        object.__setattr__(self, "Omega0_im", AlternatingForm(n, d, im))
        object.__setattr__(self, "J", J)

    @property
    def dim(self):
        return 2 * self.n

    def Omega0(self, vectors):
        """Complex value of Omega_0 on n vectors."""
        return self.Omega0_re.evaluate(vectors) + 1j * self.Omega0_im.evaluate(vectors)

    def dual_J(self, form):
        """Dual action ``alpha -> alpha o J`` on 1-forms."""
        vec = form.to_vector() @ self.J
        return AlternatingForm.from_covector(vec)

    def normalization_defect(self):
        """|omega^n/n! - (-1)^{n(n-1)/2} (i/2)^n Omega ^ conj(Omega)| on the top coefficient."""
        n = self.n
        top = self.omega0
        for _ in range(n - 1):
            top = top ^ self.omega0
        lhs = top[tuple(range(2 * n))] / math.factorial(n)
        re, im = self.Omega0_re, self.Omega0_im
        # Omega ^ conj(Omega) = (re + i im) ^ (re - i im) = -2i re ^ im  (+ re^re + im^im)
        wedge_sum = (re ^ re) + (im ^ im)
        cross = re ^ im
        val = complex(wedge_sum[tuple(range(2 * n))], -2.0 * cross[tuple(range(2 * n))])
        rhs = (-1) ** (n * (n - 1) // 2) * (0.5j) ** n * val
        return abs(lhs - rhs)


def symplectic_dual(eta, model):
    """Vector V with ``omega_0(V, .) = eta``."""
    if eta.degree != 1 or eta.dim != model.dim:
        raise InputError("eta must be a 1-form on R^{2n}")
    # omega_0(V, W) = V^T A W with A the coefficient matrix
    A = np.zeros((model.dim, model.dim))
    for (i, j), c in model.omega0.coefficients.items():
        A[i, j] += c
        A[j, i] -= c
    if abs(np.linalg.det(A)) < 1e-14:
        raise InputError("omega_0 is degenerate")
    # V^T A = eta  <=>  A^T V = eta
    return np.linalg.solve(A.T, eta.to_vector())


def linearization_identity_residual(eta, model):
    """Coefficient norm of ``iota(V_0) Im Omega_0 |_{R^n} + *eta`` on L = R^n.

    ``eta`` may be given on R^n (degree 1, dim n) or on R^{2n} with no
    dy-components.
    """
    n = model.n
    if eta.degree != 1:
        raise InputError("eta must be a 1-form")
    if eta.dim == n:
        eta_full = AlternatingForm(1, 2 * n, dict(eta.coefficients))
        eta_L = eta
    elif eta.dim == 2 * n:
        if any(i >= n for (i,) in eta.coefficients):
            raise InputError("eta has dy-components; it must be tangent to R^n")
        eta_full = eta
        eta_L = AlternatingForm(1, n, dict(eta.coefficients))
    else:
        raise InputError("eta has the wrong dimension")
    V = symplectic_dual(eta_full, model)
    contracted = model.Omega0_im.interior(V)
    inclusion = np.vstack([np.eye(n), np.zeros((n, n))])
    restricted = contracted.pullback(inclusion)
    return (restricted + hodge_star(eta_L)).norm()


@dataclass(frozen=True)
class CalibrationResult:
    lagrangian: bool
    theta: float | None
    defect: float

    def __str__(self):
        if self.lagrangian:
            return f"Lagrangian, phase {self.theta:.12g}"
        return f"not Lagrangian (symplectic defect {self.defect:.3g})"


def calibration_phase(frame, model, tol=1e-10):
    """Phase theta with Omega_0(frame) = e^{i theta} vol(frame), if Lagrangian."""
    F = np.asarray(frame, dtype=float)
    n = model.n
    if F.shape != (n, 2 * n):
        raise InputError(f"frame must be {n} vectors in R^{2 * n}")
    gram = F @ F.T
    if np.linalg.matrix_rank(F, tol=1e-12 * max(1.0, np.abs(F).max())) < n:
        raise InputError("frame is degenerate")
    # orthonormalize to measure the restricted symplectic form honestly
    Q = np.linalg.cholesky(np.linalg.inv(gram)).T @ F if n else F
    defect = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            defect += model.omega0.evaluate(Q[[i, j]]) ** 2
    defect = math.sqrt(defect)
    if defect > tol:
        return CalibrationResult(False, None, defect)
    vol = math.sqrt(np.linalg.det(gram))
    val = model.Omega0(F) / vol
    return CalibrationResult(True, float(np.angle(val) % (2 * np.pi)), defect)


# --- graphical deformations ----------------------------------------------

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
GHOST = 4


def _diff(a, axis, h):
    """Fourth-order central first derivative; trims 2 cells on ``axis``."""
    n = a.shape[axis]
    if n < 5:
        raise InputError("grid too small for the 5-point stencil")
    sl = lambda k: tuple(slice(k, n - 4 + k) if ax == axis else slice(None) for ax in range(a.ndim))
    out = np.zeros_like(a[sl(0)])
    for k, c in enumerate(_D1):
        if c:
            out = out + c * a[sl(k)]
    return out / h


def _trim(a, axis, k=2):
    n = a.shape[axis]
    return a[tuple(slice(k, n - k) if ax == axis else slice(None) for ax in range(a.ndim))]


def _grad_hess(u, h):
    n = u.ndim
    if any(s < 2 * GHOST + 1 for s in u.shape):
        raise InputError(f"grid needs at least {GHOST} ghost layers on every side")
    grad = []
    for j in range(n):
        g = _diff(u, j, h)
        for ax in range(n):
            if ax != j:
                g = _trim(g, ax)
        grad.append(g)
    # hess[j][k] = D_k (D_j u)
    hess = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(n):
            g = _diff(grad[j], k, h)
            for ax in range(n):
                if ax != k:
                    g = _trim(g, ax)
            hess[j][k] = g
    return grad, hess


def graph_deformation_F(u, spacing, model=None):
    """Sample F(du) = (*f^* Im Omega_0, f^* omega_0) for the deformation by du.

    The deformation moves x along the symplectic dual of ``du``, i.e.
    ``x -> x - i grad u(x)``, and ``*`` is taken with respect to the induced
    metric of the deformed graph.  ``u`` is sampled on a uniform grid of
    spacing ``spacing`` carrying 4 ghost layers; outputs live on the
    interior (each axis shortened by 8).

    Returns ``(zero_form, two_form)`` with ``two_form[(k, l)]`` the
    ``dx_k ^ dx_l`` coefficient for ``k < l``.
    """
    u = np.asarray(u, dtype=float)
    n = u.ndim
    if model is not None and model.n != n:
        raise InputError("model dimension does not match the grid")
    _, hess = _grad_hess(u, spacing)
    shape = hess[0][0].shape
    # tangent vector v_k = d/dx_k + sum_j B[j,k] d/dy_j with B = -Hess
    B = np.empty(shape + (n, n))
    for j in range(n):
        for k in range(n):
            B[..., j, k] = -hess[j][k]
    eye = np.broadcast_to(np.eye(n), shape + (n, n))
    M = eye + 1j * B
    Omega = np.linalg.det(M)
    gram = eye + np.swapaxes(B, -1, -2) @ B
    vol = np.sqrt(np.linalg.det(gram))
    zero_form = Omega.imag / vol
    two_form = {}
    for k in range(n):
        for l in range(k + 1, n):
            two_form[(k, l)] = B[..., k, l] - B[..., l, k]
    return zero_form, two_form


def linearized_F(u, spacing):
    """(d + d*) du on the same stencil: (-Laplacian u, 0)."""
    u = np.asarray(u, dtype=float)
    _, hess = _grad_hess(u, spacing)
    n = u.ndim
    lap = sum(hess[j][j] for j in range(n))
    two_form = {(k, l): np.zeros_like(lap) for k in range(n) for l in range(k + 1, n)}
    return -lap, two_form


def _pair_norm(zero_form, two_form):
    total = np.sum(zero_form ** 2)
    for v in two_form.values():
        total += np.sum(v ** 2)
    return math.sqrt(total / zero_form.size)


def linearization_ratios(u, spacing, eps=(1e-2, 1e-3, 1e-4)):
    """``||F(eps u) - F(0) - eps DF_0(u)|| / eps^2`` for each eps (RMS norm)."""
    u = np.asarray(u, dtype=float)
    F0z, F0t = graph_deformation_F(np.zeros_like(u), spacing)
    Lz, Lt = linearized_F(u, spacing)
    out = []
    for e in eps:
        Fz, Ft = graph_deformation_F(e * u, spacing)
        rz = Fz - F0z - e * Lz
        rt = {k: Ft[k] - F0t[k] - e * Lt[k] for k in Ft}
        out.append(_pair_norm(rz, rt) / e ** 2)
    return out
