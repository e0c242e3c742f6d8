"""Free resolvent kernels of -Laplacian in N = 1, 2, 3, sandwiched resolvents,
Birman-Schwinger operators and their boundary values on (0, inf)."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from scipy.special import kv

from .grids import SpatialGrid, TorusGrid
from .specmat import WeightedOperator, WeightedSpace, schatten_norm, unitarize
from .surface import SurfaceGrid, as_space, ts_operator

__all__ = [
    "SpectralParameter",
    "PotentialField",
    "resolvent_kernel",
    "diagonal_value",
    "free_resolvent",
    "sandwich_resolvent",
    "sobolev_exponents",
    "uniform_sobolev_sweep",
    "SobolevReport",
    "kss_multiplier_check",
    "KSSReport",
    "young_orthonormal_check",
    "birman_schwinger",
    "schatten_index",
    "lap_boundary",
    "LapReport",
    "NearSingularError",
    "perturbed_sandwich",
    "resolvent_jump_vs_extension",
    "JumpReport",
]


class NearSingularError(RuntimeError):
    """1 + A(z) is numerically singular: z is close to an eigenvalue or resonance."""


@dataclass(frozen=True)
class SpectralParameter:
    """z together with the branch of sqrt(z) that has non-negative imaginary part.

    Every kernel reads ``sqrt_z``; z itself is only used for reporting.
    Boundary values z = lambda +- i0 keep a real square root whose sign
    records the side.
    """

    sqrt_z: complex

    @classmethod
    def from_z(cls, z) -> "SpectralParameter":
        z = complex(z)
        if z.imag == 0 and z.real >= 0:
            raise ValueError(f"z = {z} lies on [0, inf); use SpectralParameter.boundary")
        s = np.sqrt(z)
        if s.imag < 0:
            s = -s
        return cls(complex(s))

    @classmethod
    def boundary(cls, lam: float, side: int = 1) -> "SpectralParameter":
        if lam <= 0:
            raise ValueError("boundary values are taken at lambda > 0")
        if side not in (1, -1):
            raise ValueError("side must be +1 or -1")
        return cls(complex(side * np.sqrt(lam)))

    def __post_init__(self):
        if self.sqrt_z.imag < 0:
            raise ValueError("sqrt_z must have non-negative imaginary part")

    @property
    def z(self) -> complex:
        return self.sqrt_z**2

    @property
    def on_boundary(self) -> bool:
        return self.sqrt_z.imag == 0


def _param(z) -> SpectralParameter:
    return z if isinstance(z, SpectralParameter) else SpectralParameter.from_z(z)


class PotentialField:
    """Complex samples of V on a grid, with the factorization V = sqrt(V) sqrt(|V|)."""

    def __init__(self, samples, grid):
        self.grid = grid
        self.space = as_space(grid)
        v = np.asarray(samples, dtype=complex).ravel()
        if v.shape[0] != self.space.size:
            raise ValueError("potential must be sampled on every grid node")
        self.samples = v
        self._norms: dict[float, float] = {}

    @classmethod
    def from_function(cls, fn, grid) -> "PotentialField":
        return cls(fn(as_space(grid).points), grid)

    def lq_norm(self, q: float) -> float:
        if q not in self._norms:
            self._norms[q] = self.space.norm(self.samples, q)
        return self._norms[q]

    @cached_property
    def sqrt_abs(self) -> np.ndarray:
        return np.sqrt(np.abs(self.samples))

    @cached_property
    def sqrt_v(self) -> np.ndarray:
        a = self.sqrt_abs
        out = np.zeros_like(self.samples)
        nz = a > 0
        out[nz] = self.samples[nz] / a[nz]
        return out

    @property
    def support(self) -> np.ndarray:
        return np.abs(self.samples) > 0

    def conj(self) -> "PotentialField":
        return PotentialField(self.samples.conj(), self.grid)

    def scaled(self, c) -> "PotentialField":
        return PotentialField(c * self.samples, self.grid)


def resolvent_kernel(N: int, z, r):
    """Integral kernel of (-Laplacian - z)^{-1} at distance r."""
    s = _param(z).sqrt_z
    r = np.asarray(r, dtype=float)
    if N == 1:
        return 1j / (2 * s) * np.exp(1j * s * r)
    if np.any(r <= 0):
        raise ValueError("kernel is singular at r = 0 for N >= 2; regularize the diagonal")
    if N == 2:
        return kv(0, -1j * s * r) / (2 * np.pi)
    if N == 3:
        return np.exp(1j * s * r) / (4 * np.pi * r)
    raise ValueError(f"resolvent kernel implemented for N in {{1, 2, 3}}, got {N}")


def diagonal_value(N: int, z, h: float) -> complex:
    """Diagonal entry that makes the Nyström sum consistent for a kernel
    singular (N >= 2) or kinked (N = 1) at r = 0.

    N = 1: endpoint-corrected trapezoid value G(0)(1 + i sqrt(z) h / 6).
    N = 2, 3: the kernel averaged over a disk/ball of the cell's area/volume.
    """
    s = _param(z).sqrt_z
    if N == 1:
        return 1j / (2 * s) * (1 + 1j * s * h / 6)
    if N == 2:
        a = h / np.sqrt(np.pi)
        c = -1j * s
        if abs(c * a) < 1e-6:
            # small-argument limit of (1 - ca K1(ca)) / (pi a^2 c^2)
            return complex((0.5 - np.euler_gamma - np.log(c * a / 2)) / (2 * np.pi))
        return complex((1 - c * a * kv(1, c * a)) / (np.pi * a**2 * c**2))
    if N == 3:
        a = h * (3 / (4 * np.pi)) ** (1 / 3)
        ib = 1j * s
        if abs(s * a) < 1e-4:
            integral = a**2 / 2 + ib * a**3 / 3
        else:
            integral = (np.exp(ib * a) * (ib * a - 1) + 1) / ib**2
        return complex(3 / (4 * np.pi * a**3) * integral)
    raise ValueError(f"N must be 1, 2 or 3, got {N}")


def _spacing(grid) -> float:
    if isinstance(grid, (SpatialGrid, TorusGrid)):
        return grid.spacing
    raise TypeError("free resolvent needs a uniform grid with a known spacing")


def free_resolvent(N: int, z, grid, points=None) -> WeightedOperator:
    """Nyström matrix of (-Laplacian - z)^{-1} on ``grid`` (optionally on a subset of nodes)."""
    zp = _param(z)
    space = as_space(grid) if points is None else points
    x = space.points
    if x.shape[1] != N:
        raise ValueError(f"grid has dimension {x.shape[1]}, expected {N}")
    D = cdist(x, x)
    if N == 1:
        G = resolvent_kernel(1, zp, D)
    else:
        np.fill_diagonal(D, 1.0)
        G = resolvent_kernel(N, zp, D)
    np.fill_diagonal(G, diagonal_value(N, zp, _spacing(grid)))
    return WeightedOperator(G, space, space)


def sandwich_resolvent(W1, W2, z, grid, alpha: float, N: int | None = None) -> float:
    """||W1 (-Laplacian - z)^{-1} W2||_{S^alpha} on the grid."""
    N = N or as_space(grid).dim
    R = free_resolvent(N, z, grid)
    return schatten_norm(R.sandwich(np.asarray(W1), np.asarray(W2)), alpha)


def sobolev_exponents(N: int, q: float) -> tuple[float, float]:
    """(Schatten exponent, power of |z|) in the uniform resolvent bound.

    Raises outside the proven ranges, except for N = 2 and 1 < q < 4/3, which
    is allowed (reported without a pass/fail verdict by the sweep).
    """
    if N == 1:
        if q != 1:
            raise ValueError("in N = 1 the sweep uses q = 1 (Hilbert-Schmidt)")
        return 2.0, -0.5
    if N == 2:
        if not 1 < q <= 1.5:
            raise ValueError(f"N=2 needs 1 < q <= 3/2, got q={q}")
    elif N == 3:
        if not 1.5 <= q <= 2:
            raise ValueError(f"N=3 needs 3/2 <= q <= 2, got q={q}")
    else:
        raise ValueError("uniform Sobolev sweep runs for N in {1, 2, 3}")
    return (N - 1) * q / (N - q), -1 + N / (2 * q)


@dataclass
class SobolevReport:
    N: int
    q: float
    alpha: float
    rows: list = field(default_factory=list)  # (resolution, z, ratio)
    factor: float = 10.0
    verdict: bool = True  # False for the N=2, q<4/3 exploratory range

    def ratios(self, resolution=None) -> np.ndarray:
        return np.array([r for (res, _, r) in self.rows if resolution is None or res == resolution])

    def spread(self, resolution=None) -> float:
        r = self.ratios(resolution)
        return float(r.max() / r.min())

    def max_change(self) -> float:
        res = sorted({row[0] for row in self.rows}, reverse=True)
        m = [self.ratios(h).max() for h in res]
        return max((abs(b - a) / a for a, b in zip(m, m[1:])), default=0.0)

    @property
    def passed(self) -> bool | None:
        if not self.verdict:
            return None
        return all(self.spread(h) <= self.factor for h in {r[0] for r in self.rows})


def uniform_sobolev_sweep(N: int, q: float, z_values, W1, W2, grids, factor: float = 10.0) -> SobolevReport:
    """Ratio ||W1 R0(z) W2||_{S^a} / (|z|^{power} ||W1||_{2q} ||W2||_{2q}) over z.

    ``W1`` and ``W2`` are callables on points so they can be resampled on
    each grid in ``grids``.
    """
    alpha, power = sobolev_exponents(N, q)
    verdict = not (N == 2 and q < 4 / 3)
    rep = SobolevReport(N, q, alpha, factor=factor, verdict=verdict)
    for g in grids if isinstance(grids, (list, tuple)) else [grids]:
        sp = as_space(g)
        w1, w2 = W1(sp.points), W2(sp.points)
        denom = sp.norm(w1, 2 * q) * sp.norm(w2, 2 * q)
        for z in z_values:
            zp = _param(z)
            val = sandwich_resolvent(w1, w2, zp, g, alpha, N)
            rep.rows.append((g.spacing, complex(zp.z), val / (abs(zp.z) ** power * denom)))
    return rep


@dataclass
class KSSReport:
    p: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def _multiplier_factor(W, ghat, grid: TorusGrid) -> np.ndarray:
    """Unitarized matrix of W(x) ghat(-i grad) on the torus, 1D or flattened nD."""
    n = grid.n**grid.d
    I = np.eye(n).reshape((n,) + grid.shape)
    ax = tuple(range(1, grid.d + 1))
    cols = np.fft.ifftn(np.fft.fftn(I, axes=ax) * np.asarray(ghat).reshape(grid.shape), axes=ax)
    M = cols.reshape(n, n).T  # column j = multiplier applied to e_j
    return np.asarray(W).ravel()[:, None] * M


def kss_multiplier_check(W, ghat, p: float, grid: TorusGrid) -> KSSReport:
    """Kato-Seiler-Simon on the torus: ||W |ghat(-i grad)|^2 conj(W)||_{S^{p/(2-p)}} against
    (2 pi)^{N(1-2/p)} ||W||^2_{2p/(2-p)} ||ghat||^2_{2p/(2-p)}.

    ``ghat`` is sampled on the FFT frequency layout and its norm uses the
    lattice measure (2 pi / L)^N.
    """
    if not 1 <= p <= 2:
        raise ValueError("need 1 <= p <= 2")
    N = grid.d
    B = _multiplier_factor(W, ghat, grid)
    alpha = p / (2 - p) if p < 2 else np.inf
    lhs = schatten_norm(B @ B.conj().T, alpha)
    r = 2 * p / (2 - p) if p < 2 else np.inf
    wn = grid.space.norm(W, r)
    a = np.abs(np.asarray(ghat)).ravel()
    gn = a.max() if np.isinf(r) else float(np.sum(a**r) * grid.dk**N) ** (1 / r)
    rhs = (2 * np.pi) ** (N * (1 - 2 / p)) * wn**2 * gn**2
    return KSSReport(p, float(lhs), float(rhs))


def young_orthonormal_check(g_multiplier, system, nu, p: float, grid: TorusGrid) -> KSSReport:
    """||sum nu_j |g * f_j|^2||_{L^{p'/2}} against (2 pi)^{2N/p'} ||ghat||^2 (sum |nu|^{p'/2})^{2/p'}.

    ``g_multiplier`` holds the Fourier coefficients int g e^{-ikx} dx on the
    FFT layout, so ghat = (2 pi)^{-N/2} g_multiplier.  ``system`` has one row
    per function, orthonormal in L^2 of the torus.
    """
    if not 1 < p <= 2:
        raise ValueError("need 1 < p <= 2")
    N = grid.d
    f = np.asarray(system, dtype=complex).reshape(len(system), *grid.shape)
    ax = tuple(range(1, N + 1))
    gf = np.fft.ifftn(np.fft.fftn(f, axes=ax) * np.asarray(g_multiplier).reshape(grid.shape), axes=ax)
    rho = np.tensordot(np.asarray(nu), np.abs(gf) ** 2, axes=1).ravel()
    pp = p / (p - 1)
    lhs = grid.space.norm(rho, pp / 2)
    ghat = (2 * np.pi) ** (-N / 2) * np.abs(np.asarray(g_multiplier)).ravel()
    r = 2 * p / (2 - p) if p < 2 else np.inf
    gn = ghat.max() if np.isinf(r) else float(np.sum(ghat**r) * grid.dk**N) ** (1 / r)
    nun = float(np.sum(np.abs(nu) ** (pp / 2)) ** (2 / pp))
    rhs = (2 * np.pi) ** (2 * N / pp) * gn**2 * nun
    return KSSReport(p, float(lhs), float(rhs))


def schatten_index(N: int, q: float) -> float:
    """alpha_q = max(2, (N-1) q / (N - q)); 2 in N = 1."""
    if N == 1:
        return 2.0
    if q >= N:
        raise ValueError("need q < N")
    return max(2.0, (N - 1) * q / (N - q))


def birman_schwinger(V: PotentialField, z, q: float | None = None, alpha: float | None = None,
                     N: int | None = None) -> tuple[WeightedOperator, float]:
    """A(z) = sqrt(V) R0(z) sqrt(|V|) on the support of V, and its S^alpha norm.

    ``alpha`` defaults to alpha_q when q is given, else to 2.
    """
    N = N or V.space.dim
    zp = _param(z)
    supp = V.support
    sub = V.space.subspace(supp)
    if sub.size == 0:
        empty = WeightedOperator(np.zeros((0, 0)), sub, sub)
        return empty, 0.0
    R = free_resolvent(N, zp, V.grid, points=sub)
    A = R.sandwich(V.sqrt_v[supp], V.sqrt_abs[supp])
    if alpha is None:
        alpha = schatten_index(N, q) if q is not None else 2.0
    return A, schatten_norm(A, alpha)


def perturbed_sandwich(A: WeightedOperator, max_condition: float = 1e12) -> np.ndarray:
    """Unitarized (1 + A)^{-1} A, refusing near-singular 1 + A."""
    U = unitarize(A)
    M = np.eye(U.shape[0]) + U
    s = linalg.svdvals(M)
    cond = s[0] / s[-1] if s[-1] > 0 else np.inf
    if cond > max_condition:
        raise NearSingularError(
            f"1 + A(z) has condition number {cond:.3g}; possible eigenvalue or resonance"
        )
    return linalg.solve(M, U)


@dataclass
class LapReport:
    lam: float
    side: int
    eps_list: list
    alpha: float
    cauchy: list
    extrapolated: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    extrapolation_error: float = 0.0
    raw_error: float = 0.0
    boundary_norm: float = 0.0
    perturbed_norm: float | None = None
    neumann_residual: float | None = None

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.cauchy, self.cauchy[1:]))


def lap_boundary(V: PotentialField, lam: float, side: int, eps_list, q: float | None = None,
                 alpha: float | None = None) -> LapReport:
    """Approach A(lambda +- i eps) as eps -> 0 along a geometric sequence.

    Records Cauchy differences in S^alpha, a two-step Richardson extrapolation
    (removing the eps and eps^2 terms) and its distance to the boundary
    operator built directly from the real square root.
    """
    eps_list = sorted(eps_list, reverse=True)
    if len(eps_list) < 3:
        raise ValueError("need at least 3 values of eps")
    ratios = np.array(eps_list[:-1]) / np.array(eps_list[1:])
    if not np.allclose(ratios, ratios[0]):
        raise ValueError("eps_list must be geometric")
    rho = ratios[0]
    N = V.space.dim
    if alpha is None:
        alpha = schatten_index(N, q) if q is not None else 2.0
    mats = [unitarize(birman_schwinger(V, lam + side * 1j * e, alpha=alpha)[0]) for e in eps_list]
    cauchy = [schatten_norm(a - b, alpha) for a, b in zip(mats, mats[1:])]
    r1 = [(rho * b - a) / (rho - 1) for a, b in zip(mats, mats[1:])]
    r2 = [(rho**2 * b - a) / (rho**2 - 1) for a, b in zip(r1, r1[1:])]
    A0 = unitarize(birman_schwinger(V, SpectralParameter.boundary(lam, side), alpha=alpha)[0])
    bnorm = schatten_norm(A0, alpha)
    rep = LapReport(
        lam, side, eps_list, alpha, cauchy, r2[-1], A0,
        extrapolation_error=schatten_norm(r2[-1] - A0, alpha) / bnorm if bnorm else 0.0,
        raw_error=schatten_norm(mats[-1] - A0, alpha) / bnorm if bnorm else 0.0,
        boundary_norm=bnorm,
    )
    if bnorm > 0:
        P = perturbed_sandwich(WeightedOperator.from_unitary_matrix(A0, *([V.space.subspace(V.support)] * 2)))
        rep.perturbed_norm = schatten_norm(P, alpha)
        rep.neumann_residual = schatten_norm(P - A0, np.inf)
    return rep


@dataclass
class JumpReport:
    t_list: list
    distances: list

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))


def resolvent_jump_vs_extension(grid, surface: SurfaceGrid, t_list, W1, W2) -> JumpReport:
    """Relative HS distance between W1 (R0(1+it) - R0(1-it)) W2 and 2 pi i W1 T_S W2.

    ``surface`` should carry the quadratic-form measure on the unit sphere
    (half the surface measure), for which the jump limit is exactly 2 pi i T_S.
    """
    N = as_space(grid).dim
    w1, w2 = np.asarray(W1), np.asarray(W2)
    target = unitarize(ts_operator(surface, grid).sandwich(w1, w2)) * (2j * np.pi)
    tn = np.linalg.norm(target)
    dists = []
    for t in sorted(t_list, reverse=True):
        jump = free_resolvent(N, 1 + 1j * t, grid) - free_resolvent(N, 1 - 1j * t, grid)
        J = unitarize(jump.sandwich(w1, w2))
        dists.append(float(np.linalg.norm(J - target) / tn) if tn > 0 else float(np.linalg.norm(J)))
    return JumpReport(sorted(t_list, reverse=True), dists)
