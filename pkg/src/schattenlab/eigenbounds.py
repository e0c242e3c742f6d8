"""Discrete Schrödinger operators with complex potentials, their eigenvalue
clouds, eigenvalue-sum functionals and determinant-based zero counting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .grids import SpatialGrid, TorusGrid
from .resolvent import PotentialField, SpectralParameter, birman_schwinger
from .specmat import regularized_det, unitarize

__all__ = [
    "QuadraticPencil",
    "discretize_schrodinger",
    "EigenvalueCloud",
    "eigen_cloud",
    "distance_to_halfline",
    "single_bound_check",
    "SingleBoundReport",
    "check_lt_epsilon",
    "lt_sum",
    "lt_rhs",
    "lt_sum_critical",
    "conformal_map",
    "inverse_map",
    "bgk_sum",
    "det_zero_locator",
    "ZeroCount",
    "ZeroOnContourError",
    "quadrant_rectangles",
    "boundary_distance",
    "separated_rectangles",
]


class QuadraticPencil:
    """mu^2 K2 + mu K1 + K0 from a 1D finite-difference box whose exterior is
    the exact decaying discrete solution psi_j ~ mu^|j|.

    Eigenvalues with |mu| < 1 are exactly those of the infinite-lattice
    operator, so there are no box modes to filter out.
    """

    def __init__(self, V, h: float):
        v = np.asarray(V, dtype=complex)
        # where V vanishes the exterior solution mu^|j| is exact, so zero tails are dropped
        nz = np.flatnonzero(v)
        if len(nz):
            v = v[nz[0]:nz[-1] + 1]
        else:
            v = v[:1]
        m = len(v)
        self.h = h
        self.size = m
        off = np.ones(m - 1)
        self.K1 = np.diag(h * h * v) - np.diag(off, 1) - np.diag(off, -1)
        self.K2 = np.eye(m, dtype=complex)
        self.K2[0, 0] = self.K2[-1, -1] = 0.0

    @property
    def norm_estimate(self) -> float:
        return float((4 + np.abs(np.diag(self.K1)).max()) / self.h**2)

    def eigenvalues(self, mu_cut: float = 1 - 1e-8) -> np.ndarray:
        m = self.size
        # companion form in nu = 1/mu: nu^2 I + nu K1 + K2 = 0
        C = np.zeros((2 * m, 2 * m), dtype=complex)
        C[:m, m:] = np.eye(m)
        C[m:, :m] = -self.K2
        C[m:, m:] = -self.K1
        nu = linalg.eigvals(C, check_finite=False)
        nu = nu[np.abs(nu) > 1 / mu_cut]
        mu = 1 / nu
        # Re mu < 0 are lattice states above the band edge 4/h^2, no continuum analogue
        mu = mu[mu.real > 0]
        return (2 - mu - 1 / mu) / self.h**2


def _fd_laplacian_1d(n: int, h: float):
    main = np.full(n, 2.0) / h**2
    off = np.full(n - 1, -1.0) / h**2
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def discretize_schrodinger(V: PotentialField, grid=None, boundary: str = "dirichlet",
                           as_sparse: bool = False):
    """-Laplacian + V on ``grid`` (defaults to the potential's grid).

    boundary:
      "dirichlet"   second-order finite differences with walls (SpatialGrid, N in {1, 2})
      "periodic"    Fourier-spectral Laplacian (TorusGrid)
      "transparent" 1D finite differences with exact outgoing exterior; returns a QuadraticPencil
    """
    grid = grid if grid is not None else V.grid
    v = V.samples
    if boundary == "periodic":
        if not isinstance(grid, TorusGrid):
            raise TypeError("periodic boundary needs a TorusGrid")
        n = grid.n**grid.d
        I = np.eye(n).reshape((n,) + grid.shape)
        ax = tuple(range(1, grid.d + 1))
        lap = np.fft.ifftn(np.fft.fftn(I, axes=ax) * grid.k2, axes=ax).reshape(n, n).T
        H = lap.real.astype(complex) + np.diag(v)
        return H
    if not isinstance(grid, SpatialGrid) or grid.radius is not None:
        raise TypeError(f"{boundary} boundary needs an unmasked SpatialGrid")
    h = grid.spacing
    if boundary == "transparent":
        if grid.N != 1:
            raise ValueError("transparent boundary is implemented in 1D")
        return QuadraticPencil(v, h)
    if boundary != "dirichlet":
        raise ValueError(f"unknown boundary {boundary!r}")
    L1 = _fd_laplacian_1d(grid.n, h)
    if grid.N == 1:
        L = L1
    elif grid.N == 2:
        I = sparse.identity(grid.n, format="csr")
        L = sparse.kron(L1, I) + sparse.kron(I, L1)
    else:
        raise ValueError("Dirichlet discretization implemented for N in {1, 2}")
    H = (L + sparse.diags(v)).tocsr()
    return H if as_sparse else H.toarray().astype(complex)


def distance_to_halfline(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=complex)
    return np.where(lam.real < 0, np.abs(lam), np.abs(lam.imag))


@dataclass
class EigenvalueCloud:
    entries: list  # (lambda, multiplicity)
    provenance: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=complex)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=int)

    @property
    def count(self) -> int:
        return int(sum(m for _, m in self.entries))

    def __len__(self):
        return len(self.entries)

    def conj(self) -> "EigenvalueCloud":
        return EigenvalueCloud([(np.conj(l), m) for l, m in self.entries], dict(self.provenance))

    def inside(self, rect) -> "EigenvalueCloud":
        x0, x1, y0, y1 = rect
        keep = [(l, m) for l, m in self.entries if x0 < l.real < x1 and y0 < l.imag < y1]
        return EigenvalueCloud(keep, dict(self.provenance))

    def union(self, other: "EigenvalueCloud") -> "EigenvalueCloud":
        return EigenvalueCloud(self.entries + other.entries, dict(self.provenance))


def eigen_cloud(H, filter_tol: float = 1e-6, cluster_radius: float | None = None) -> EigenvalueCloud:
    """Eigenvalues off [0, inf), clustered with summed multiplicities.

    ``H`` is a dense matrix or any object with ``eigenvalues()`` (such as a
    QuadraticPencil).
    """
    if hasattr(H, "eigenvalues"):
        lam = np.asarray(H.eigenvalues())
        scale = getattr(H, "norm_estimate", np.abs(lam).max(initial=1.0))
        size = getattr(H, "size", len(lam))
    else:
        H = np.asarray(H)
        lam = linalg.eigvals(H, check_finite=False)
        scale = np.linalg.norm(H, 2) if H.size else 1.0
        size = H.shape[0]
    radius = 1e-7 * scale if cluster_radius is None else cluster_radius
    lam = lam[distance_to_halfline(lam) > filter_tol]
    lam = lam[np.lexsort((lam.imag, lam.real))]
    entries: list = []
    used = np.zeros(len(lam), dtype=bool)
    for i in range(len(lam)):
        if used[i]:
            continue
        close = (~used) & (np.abs(lam - lam[i]) <= radius)
        used |= close
        entries.append((complex(lam[close].mean()), int(close.sum())))
    prov = {"size": size, "filter_tol": filter_tol, "cluster_radius": radius}
    return EigenvalueCloud(entries, prov)


@dataclass
class SingleBoundReport:
    gamma: float
    ratios: list

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)


def single_bound_check(cloud: EigenvalueCloud, V: PotentialField, gamma: float) -> SingleBoundReport:
    """|lambda|^gamma / int |V|^{gamma + N/2} for each eigenvalue."""
    if not 0 < gamma <= 0.5:
        raise ValueError("gamma must lie in (0, 1/2]")
    N = V.space.dim
    integral = V.lq_norm(gamma + N / 2) ** (gamma + N / 2)
    return SingleBoundReport(gamma, [abs(l) ** gamma / integral for l in cloud.values])


def check_lt_epsilon(N: int, q: float, eps: float) -> None:
    if N == 1:
        if q != 1:
            raise ValueError("N=1 requires q = 1")
        if not eps > 1:
            raise ValueError(f"case N=1 needs eps > 1, got eps={eps}")
        return
    if N == 2 and not 1 < q <= 1.5:
        raise ValueError(f"N=2 needs 1 < q <= 3/2, got q={q}")
    if N >= 3 and not N / 2 < q <= (N + 1) / 2:
        raise ValueError(f"N>=3 needs N/2 < q <= (N+1)/2 for this sum, got q={q}")
    crit = N**2 / (2 * N - 1)
    if q < crit:
        if eps < 0:
            raise ValueError(f"case N/2 < q < N^2/(2N-1) needs eps >= 0, got eps={eps}")
    else:
        lower = ((2 * N - 1) * q - N**2) / (N - q)
        if not eps > lower:
            raise ValueError(
                f"case N^2/(2N-1) <= q <= (N+1)/2 needs eps > {lower:.6g}, got eps={eps}"
            )


def lt_sum(cloud: EigenvalueCloud, eps: float, N: int | None = None, q: float | None = None) -> float:
    """sum m d(lambda, [0, inf)) / |lambda|^{(1-eps)/2}; validates eps when (N, q) are given."""
    if N is not None and q is not None:
        check_lt_epsilon(N, q, eps)
    if not cloud.entries:
        return 0.0
    lam = cloud.values
    return float(np.sum(cloud.multiplicities * distance_to_halfline(lam) / np.abs(lam) ** ((1 - eps) / 2)))


def lt_rhs(V: PotentialField, eps: float, q: float) -> float:
    N = V.space.dim
    return V.lq_norm(q) ** ((1 + eps) * q / (2 * q - N))


def _sqrt_upper(lam):
    s = np.sqrt(np.asarray(lam, dtype=complex))
    return np.where(s.imag < 0, -s, s)


def lt_sum_critical(cloud: EigenvalueCloud) -> float:
    if not cloud.entries:
        return 0.0
    lam = cloud.values
    return float(np.sum(cloud.multiplicities * _sqrt_upper(lam).imag / (1 + np.abs(lam))))


def conformal_map(a: float, w):
    """a ((1 + w) / (1 - w))^2, mapping the unit disk onto C minus [0, inf) for a < 0."""
    if a >= 0:
        raise ValueError("a must be negative")
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) >= 1):
        raise ValueError("w must lie in the open unit disk")
    out = a * ((1 + w) / (1 - w)) ** 2
    return complex(out) if out.ndim == 0 else out


def inverse_map(a: float, lam):
    if a >= 0:
        raise ValueError("a must be negative")
    lam = np.asarray(lam, dtype=complex)
    if np.any((lam.imag == 0) & (lam.real >= 0)):
        raise ValueError("lambda must lie off [0, inf)")
    s = np.sqrt(-lam)  # principal branch: Re > 0 off the cut
    s = s / np.sqrt(-a)
    out = (s - 1) / (s + 1)
    return complex(out) if out.ndim == 0 else out


def bgk_sum(zeros, alpha: float, delta: float) -> float:
    """sum m (1 - |w|) |1 + w|^{(alpha - 1 + delta)_+} over zeros (w, m) in the disk."""
    if alpha < 0 or delta <= 0:
        raise ValueError("need alpha >= 0 and delta > 0")
    expo = max(alpha - 1 + delta, 0.0)
    total = 0.0
    for w, m in zeros:
        if abs(w) >= 1:
            raise ValueError("zeros must lie in the open unit disk")
        total += m * (1 - abs(w)) * abs(1 + w) ** expo
    return float(total)


class ZeroOnContourError(RuntimeError):
    pass


@dataclass
class ZeroCount:
    rect: tuple
    raw: complex
    count: int
    zeros: list
    min_modulus: float

    @property
    def integer_defect(self) -> float:
        return abs(self.raw - self.count)


def _rect_contour(rect, m: int):
    # each side is graded toward its corners with g(s) = s - sin(2 pi s)/(2 pi);
    # the trapezoid rule in s stays spectrally accurate and resolves the corner
    # nearest the branch point
    x0, x1, y0, y1 = rect
    per = max(m // 4, 4)
    s = np.arange(per) / per
    g = s - np.sin(2 * np.pi * s) / (2 * np.pi)
    dg = (1 - np.cos(2 * np.pi * s)) / per
    corners = [x0 + 1j * y0, x1 + 1j * y0, x1 + 1j * y1, x0 + 1j * y1]
    zs, dzs = [], []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        zs.append(a + (b - a) * g)
        dzs.append((b - a) * dg)
    return np.concatenate(zs), np.concatenate(dzs)


def quadrant_rectangles(extent: float, margin: float) -> list:
    """Four rectangles covering the quadrants of [-extent, extent]^2, each kept
    ``margin`` away from both axes."""
    X, d = extent, margin
    return [(-X, -d, -X, -d), (-X, -d, d, X), (d, X, d, X), (d, X, -X, -d)]


def boundary_distance(rect, z) -> np.ndarray:
    """Distance from each z to the boundary of the rectangle."""
    x0, x1, y0, y1 = rect
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    x, y = z.real, z.imag
    cx = np.clip(x, x0, x1)
    cy = np.clip(y, y0, y1)
    inside = (x0 <= x) & (x <= x1) & (y0 <= y) & (y <= y1)
    d_in = np.minimum.reduce([x - x0, x1 - x, y - y0, y1 - y])
    d_out = np.hypot(x - cx, y - cy)
    return np.where(inside, d_in, d_out)


def separated_rectangles(cloud: EigenvalueCloud, extent: float,
                         margins=(0.05, 0.07, 0.1, 0.14, 0.2, 0.3), gap: float = 0.02):
    """Quadrant rectangles with the smallest margin whose edges stay ``gap``
    away from every eigenvalue in the cloud. Returns (margin, rects)."""
    lam = cloud.values
    for d in margins:
        rects = quadrant_rectangles(extent, d)
        if not len(lam) or all(boundary_distance(r, lam).min() >= gap for r in rects):
            return d, rects
    raise ValueError("no candidate margin keeps the contours clear of the eigenvalues")


def _det_fn(V: PotentialField, n_det: int):
    def h(z):
        A, _ = birman_schwinger(V, SpectralParameter.from_z(z), alpha=2.0)
        return regularized_det(A, n_det, method="lu")
    return h


def det_zero_locator(V: PotentialField, rect, n_det: int = 2, contour_m: int = 400,
                     seeds=None, newton_steps: int = 30, max_doublings: int = 3,
                     margin: float = 1e-3) -> ZeroCount:
    """Count zeros of h(z) = Det_n(1 + A(z)) inside ``rect`` = (x0, x1, y0, y1).

    The winding integral uses the trapezoid rule on the rectangle with h'
    from central differences; the rectangle must avoid [0, inf). The
    contour is doubled up to ``max_doublings`` times until the raw winding
    lands within 0.1 of an integer.
    """
    x0, x1, y0, y1 = rect
    if not (x0 < x1 and y0 < y1):
        raise ValueError("rect must be (x0, x1, y0, y1) with x0 < x1, y0 < y1")
    gap_y = 0.0 if y0 <= 0 <= y1 else min(abs(y0), abs(y1))
    gap = np.hypot(min(x1, 0.0), gap_y)
    if gap < margin:
        raise ValueError(f"rectangle is {gap:.3g} from [0, inf), need at least {margin}")
    h = _det_fn(V, n_det)
    m = contour_m
    for _ in range(max_doublings + 1):
        z, dz = _rect_contour(rect, m)
        z, dz = z[dz != 0], dz[dz != 0]  # corner nodes carry zero weight
        step = 1e-3 * np.abs(dz).mean()
        hv = np.array([h(zz) for zz in z])
        mins = float(np.abs(hv).min())
        if mins < 1e-12:
            raise ZeroOnContourError("zero on contour; perturb rect")
        dh = np.array([(h(zz + step) - h(zz - step)) / (2 * step) for zz in z])
        raw = complex(np.sum(dh / hv * dz) / (2j * np.pi))
        count = int(round(raw.real))
        if abs(raw - count) < 0.1:
            break
        m *= 2
    else:
        raise RuntimeError(f"winding integral not near an integer ({raw:.4g}) at contour_m={m // 2}")
    zeros = []
    for s in seeds if seeds is not None else []:
        zz = complex(s)
        for _ in range(newton_steps):
            f = h(zz)
            fp = (h(zz + step) - h(zz - step)) / (2 * step)
            if fp == 0:
                break
            dz_ = f / fp
            zz -= dz_
            if abs(dz_) < 1e-12 * max(1.0, abs(zz)):
                break
        if x0 < zz.real < x1 and y0 < zz.imag < y1:
            zeros.append(zz)
    return ZeroCount(tuple(rect), raw, count, zeros, mins)
