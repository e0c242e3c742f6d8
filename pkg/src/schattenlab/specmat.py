"""Weighted discrete L^2 spaces, integral operators between them and their
Schatten-class quantities.

An operator is stored by its integral kernel sampled on the nodes of two
quadrature rules.  Applying it to ``f`` means ``K @ (w_domain * f)``.  Every
spectral quantity is computed from the symmetric conjugation

    U = D_codomain^{1/2} K D_domain^{1/2},

which is the matrix of the operator in an orthonormal basis.  The spectrum of
``U`` therefore does not depend on how the quadrature is laid out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "WeightedSpace",
    "WeightedOperator",
    "SingularSpectrum",
    "DensityMatrix",
    "unitarize",
    "singular_values",
    "schatten_norm",
    "regularized_det",
    "density_of",
    "orthonormalize",
    "RankDeficiencyError",
]


class RankDeficiencyError(ValueError):
    """Columns are numerically dependent in the weighted inner product."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedSpace:
    """Discrete L^2 space: nodes in R^N and positive quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.size

    def inner(self, f, g) -> complex:
        """<f, g>, antilinear in the first slot."""
        return complex(np.sum(np.conj(f) * g * self.weights))

    def norm(self, f, p: float = 2.0) -> float:
        a = np.abs(np.asarray(f))
        if np.isinf(p):
            return float(a.max()) if a.size else 0.0
        return float(np.sum(a**p * self.weights) ** (1.0 / p))

    def integrate(self, f) -> complex:
        return complex(np.sum(np.asarray(f) * self.weights))

    def subspace(self, mask) -> "WeightedSpace":
        mask = np.asarray(mask)
        return WeightedSpace(self.points[mask], self.weights[mask])

    def split_node(self, index: int) -> "WeightedSpace":
        """Same measure with node ``index`` duplicated at half weight."""
        pts = np.insert(self.points, index, self.points[index], axis=0)
        w = np.insert(self.weights, index, self.weights[index])
        w[index] *= 0.5
        w[index + 1] *= 0.5
        return WeightedSpace(pts, w)


@dataclass(frozen=True, eq=False)
class WeightedOperator:
    """Integral kernel ``matrix[i, j] = K(x_i, y_j)`` from domain to codomain."""

    matrix: np.ndarray
    domain: WeightedSpace
    codomain: WeightedSpace

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2:
            raise ValueError("operator matrix must be two-dimensional")
        if m.shape != (self.codomain.size, self.domain.size):
            raise ValueError(
                f"matrix shape {m.shape} does not match spaces "
                f"({self.codomain.size}, {self.domain.size})"
            )
        object.__setattr__(self, "matrix", m.astype(complex, copy=False))

    @classmethod
    def from_action(cls, action, domain, codomain) -> "WeightedOperator":
        """Build from a matrix acting on nodal values, ``(Af)_i = P_ij f_j``."""
        return cls(np.asarray(action) / domain.weights[None, :], domain, codomain)

    @classmethod
    def from_unitary_matrix(cls, u, domain, codomain) -> "WeightedOperator":
        """Inverse of :func:`unitarize`."""
        u = np.asarray(u)
        return cls(
            u / np.sqrt(codomain.weights)[:, None] / np.sqrt(domain.weights)[None, :],
            domain,
            codomain,
        )

    @classmethod
    def identity(cls, space: WeightedSpace) -> "WeightedOperator":
        return cls(np.diag(1.0 / space.weights), space, space)

    @classmethod
    def multiplication(cls, values, space: WeightedSpace) -> "WeightedOperator":
        return cls(np.diag(np.asarray(values) / space.weights), space, space)

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f):
        f = np.asarray(f)
        w = self.domain.weights if f.ndim == 1 else self.domain.weights[:, None]
        return self.matrix @ (w * f)

    def adjoint(self) -> "WeightedOperator":
        return WeightedOperator(self.matrix.conj().T, self.codomain, self.domain)

    def compose(self, other: "WeightedOperator") -> "WeightedOperator":
        """``self ∘ other``; the middle quadrature weights are absorbed here."""
        if other.codomain.size != self.domain.size:
            raise ValueError("cannot compose: inner spaces differ in size")
        m = (self.matrix * self.domain.weights[None, :]) @ other.matrix
        return WeightedOperator(m, other.domain, self.codomain)

    __matmul__ = compose

    def sandwich(self, left=None, right=None) -> "WeightedOperator":
        """``W1 ∘ self ∘ W2`` for multiplication operators given by samples."""
        m = self.matrix
        if left is not None:
            m = np.asarray(left)[:, None] * m
        if right is not None:
            m = m * np.asarray(right)[None, :]
        return WeightedOperator(m, self.domain, self.codomain)

    def __add__(self, other: "WeightedOperator") -> "WeightedOperator":
        return WeightedOperator(self.matrix + other.matrix, self.domain, self.codomain)

    def __sub__(self, other: "WeightedOperator") -> "WeightedOperator":
        return WeightedOperator(self.matrix - other.matrix, self.domain, self.codomain)

    def scale(self, c) -> "WeightedOperator":
        return WeightedOperator(c * self.matrix, self.domain, self.codomain)


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.abs(np.asarray(self.values, dtype=float)))[::-1]
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self):
        return len(self.values)

    def norm(self, alpha: float) -> float:
        return _lp(self.values, alpha)


def _lp(s: np.ndarray, alpha: float) -> float:
    if alpha <= 0:
        raise ValueError("Schatten exponent must be positive")
    if s.size == 0:
        return 0.0
    if np.isinf(alpha):
        return float(s.max())
    top = float(s.max())
    if top == 0.0:
        return 0.0
    if alpha < 1:
        # roundoff-level singular values dominate a quasi-norm; treat them as zero
        s = np.where(s > s.size * np.finfo(float).eps * top, s, 0.0)
    # scale out the largest value so large alpha does not overflow
    return top * float(np.sum((s / top) ** alpha) ** (1.0 / alpha))


def unitarize(op: WeightedOperator) -> np.ndarray:
    sc = np.sqrt(op.codomain.weights)
    sd = np.sqrt(op.domain.weights)
    return sc[:, None] * op.matrix * sd[None, :]


def singular_values(op: WeightedOperator) -> SingularSpectrum:
    u = unitarize(op)
    if u.size == 0:
        return SingularSpectrum(np.zeros(0))
    return SingularSpectrum(linalg.svdvals(u, check_finite=False))


# above this size the even exponents 2 and 4 use trace identities instead of an SVD
_TRACE_ROUTE_SIZE = 600


def schatten_norm(op, alpha: float) -> float:
    """(sum of sigma_n^alpha)^(1/alpha); alpha = inf gives the operator norm.

    ``op`` may be a :class:`WeightedOperator` or an already unitarized matrix.
    For alpha in {2, 4} and large matrices the value comes from
    ``tr (U*U)^(alpha/2)``, which avoids the SVD.
    """
    if alpha <= 0:
        raise ValueError("Schatten exponent must be positive")
    u = unitarize(op) if isinstance(op, WeightedOperator) else np.asarray(op)
    if u.size == 0:
        return 0.0
    if alpha == 2:
        return float(np.linalg.norm(u))
    if alpha == 4 and min(u.shape) > _TRACE_ROUTE_SIZE:
        g = u.conj().T @ u if u.shape[0] >= u.shape[1] else u @ u.conj().T
        return float(np.linalg.norm(g)) ** 0.5
    return _lp(linalg.svdvals(u, check_finite=False), alpha)


def regularized_det(op, n: int, method: str = "eig") -> complex:
    """Det_n(1 + A) from the eigenvalues of the unitarized matrix.

    ``method="lu"`` uses det(1 + A) exp(sum_{j<n} (-1)^j tr A^j / j), the same
    number for a finite matrix, at the cost of one LU factorization.
    """
    if n < 1:
        raise ValueError("determinant order must be >= 1")
    u = unitarize(op) if isinstance(op, WeightedOperator) else np.asarray(op)
    if u.shape[0] != u.shape[1]:
        raise ValueError("regularized determinant needs a square operator")
    if u.size == 0:
        return 1.0 + 0.0j
    if method == "lu":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)  # exact zero pivot is handled below
            lu, piv = linalg.lu_factor(np.eye(u.shape[0]) + u, check_finite=False)
        d = np.diag(lu)
        if np.any(d == 0):
            return 0j
        sign = (-1.0) ** np.count_nonzero(piv != np.arange(len(piv)))
        logdet = np.sum(np.log(d.astype(complex))) + np.log(complex(sign))
        p = np.eye(u.shape[0], dtype=complex)
        for j in range(1, n):
            p = p @ u
            logdet += (-1.0) ** j * np.trace(p) / j
        return complex(np.exp(logdet))
    if method != "eig":
        raise ValueError(f"unknown method {method!r}")
    lam = linalg.eigvals(u, check_finite=False)
    one_plus = 1.0 + lam
    if np.any(one_plus == 0):
        return 0j
    log = np.log(one_plus.astype(complex))
    for j in range(1, n):
        log = log + (-lam) ** j / j
    return complex(np.exp(np.sum(log)))


class DensityMatrix:
    """Self-map of a weighted space, typically gamma = sum nu_j |f_j><f_j|."""

    def __init__(self, operator: WeightedOperator, hermitian: bool = True, tol: float = 1e-10):
        if operator.domain is not operator.codomain and (
            operator.domain.size != operator.codomain.size
            or not np.array_equal(operator.domain.weights, operator.codomain.weights)
        ):
            raise ValueError("a density matrix maps a space to itself")
        self.operator = operator
        self.hermitian = bool(hermitian)
        if self.hermitian:
            u = self.unitary()
            scale = max(np.linalg.norm(u), 1e-300)
            if np.linalg.norm(u - u.conj().T) > tol * scale:
                raise ValueError("matrix flagged Hermitian is not Hermitian")

    @classmethod
    def from_system(cls, functions, nu, space: WeightedSpace) -> "DensityMatrix":
        """Kernel sum_j nu_j f_j(x) conj(f_j(y)); ``functions`` has one column per f_j."""
        f = np.asarray(functions, dtype=complex)
        if f.ndim == 1:
            f = f[:, None]
        nu = np.broadcast_to(np.asarray(nu, dtype=complex), (f.shape[1],))
        kernel = (f * nu[None, :]) @ f.conj().T
        herm = bool(np.all(np.abs(nu.imag) <= 1e-14 * max(1.0, np.abs(nu).max(initial=0))))
        return cls(WeightedOperator(kernel, space, space), hermitian=herm)

    @classmethod
    def from_unitary(cls, u, space: WeightedSpace, hermitian: bool = True) -> "DensityMatrix":
        return cls(WeightedOperator.from_unitary_matrix(u, space, space), hermitian=hermitian)

    @property
    def space(self) -> WeightedSpace:
        return self.operator.domain

    def unitary(self) -> np.ndarray:
        return unitarize(self.operator)

    def trace(self) -> complex:
        return complex(np.trace(self.unitary()))

    def eigenvalues(self) -> np.ndarray:
        u = self.unitary()
        if self.hermitian:
            return linalg.eigvalsh(0.5 * (u + u.conj().T))
        return linalg.eigvals(u)

    def schatten(self, alpha: float) -> float:
        if self.hermitian:
            return _lp(np.abs(self.eigenvalues()), alpha)
        return schatten_norm(self.operator, alpha)

    def kernel_diagonal(self) -> np.ndarray:
        d = np.diag(self.operator.matrix)
        return d.real.copy() if self.hermitian else d.copy()


def density_of(A: WeightedOperator, gamma: DensityMatrix) -> np.ndarray:
    """Kernel diagonal of A gamma A* on the codomain nodes of ``A``."""
    g = gamma.operator
    if g.domain.size != A.domain.size:
        raise ValueError(
            f"gamma acts on {g.domain.size} nodes, A has domain of size {A.domain.size}"
        )
    b = A.matrix * A.domain.weights[None, :]
    rho = np.einsum("ij,ij->i", b @ g.matrix, b.conj())
    return rho.real if gamma.hermitian else rho


def orthonormalize(columns, space: WeightedSpace, max_condition: float = 1e10) -> np.ndarray:
    """Orthonormal columns spanning the same space, in the weighted inner product.

    Uses a QR factorization of the weight-scaled columns; phases are chosen so
    that an input that is already orthonormal comes back unchanged.
    """
    c = np.asarray(columns, dtype=complex)
    if c.ndim == 1:
        c = c[:, None]
    if c.shape[0] != space.size:
        raise ValueError("columns must be sampled on the space's nodes")
    sw = np.sqrt(space.weights)[:, None]
    b = sw * c
    s = linalg.svdvals(b)
    if s.size == 0 or s[-1] == 0 or s[0] / s[-1] > max_condition:
        cond = np.inf if s.size == 0 or s[-1] == 0 else s[0] / s[-1]
        raise RankDeficiencyError(
            f"columns are numerically dependent (condition number {cond:.3g})"
        )
    q, r = linalg.qr(b, mode="economic")
    d = np.diag(r)
    q = q * (d / np.abs(d))[None, :]
    return q / sw
