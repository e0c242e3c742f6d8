"""Sandwiched Schatten norms of W1 T_S W2, orthonormal restriction sums, the
duality identity between them, and the optimality and Knapp probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import j1

from .fitting import SlopeFit, trimmed_slope_fit
from .grids import RadialGrid, SpatialGrid
from .specmat import (
    DensityMatrix,
    WeightedOperator,
    WeightedSpace,
    density_of,
    orthonormalize,
    schatten_norm,
    unitarize,
)
from .surface import SurfaceGrid, SurfaceKind, SurfaceSpec, as_space, build_surface, extension_matrix

__all__ = [
    "BumpWeight",
    "random_bump_weight",
    "restriction_exponent",
    "sandwich_norm",
    "factored_sandwich_norm",
    "verify_restriction",
    "RestrictionReport",
    "orthonormal_lhs",
    "orthonormal_rhs",
    "duality_check",
    "DualityReport",
    "gamma_h",
    "optimality_slope",
    "OptimalityReport",
    "expected_optimality_slope",
    "knapp_tube_ratio",
]


@dataclass(frozen=True)
class BumpWeight:
    """Sum of complex Gaussian bumps times a global plane-wave phase.

    Defined on all of R^N, so the same witness can be sampled on any grid.
    """

    centers: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray
    wavevector: np.ndarray

    def __call__(self, points) -> np.ndarray:
        x = np.atleast_2d(points)
        d2 = np.sum((x[:, None, :] - self.centers[None]) ** 2, axis=-1)
        env = np.exp(-d2 / (2 * self.widths[None] ** 2)) @ self.amplitudes
        return env * np.exp(1j * x @ self.wavevector)

    def scaled(self, c) -> "BumpWeight":
        return BumpWeight(self.centers, self.widths, c * self.amplitudes, self.wavevector)


def random_bump_weight(rng: np.random.Generator, N: int, max_bumps: int = 3,
                       spread: float = 2.5, widths=(0.4, 1.2), max_freq: float = 1.0) -> BumpWeight:
    k = int(rng.integers(1, max_bumps + 1))
    centers = rng.uniform(-spread, spread, size=(k, N))
    w = rng.uniform(*widths, size=k)
    amps = rng.normal(size=k) + 1j * rng.normal(size=k)
    kv = rng.uniform(-max_freq, max_freq, size=N)
    return BumpWeight(centers, w, amps, kv)


def restriction_exponent(kind, N: int, q: float) -> float:
    """Schatten exponent for W1 T_S W2 with W_i in L^{2q}; raises if q is inadmissible."""
    kind = SurfaceKind(kind)
    if kind is SurfaceKind.SPHERE:
        if not 1 <= q <= (N + 1) / 2:
            raise ValueError(f"compact surface needs 1 <= q <= (N+1)/2 = {(N + 1) / 2}, got q={q}")
        return (N - 1) * q / (N - q)
    if kind is SurfaceKind.PARABOLOID:
        if not np.isclose(q, (N + 1) / 2):
            raise ValueError(f"paraboloid needs q = (N+1)/2 = {(N + 1) / 2}, got q={q}")
    elif kind is SurfaceKind.CONE:
        if not np.isclose(q, N / 2):
            raise ValueError(f"cone needs q = N/2 = {N / 2}, got q={q}")
    elif kind is SurfaceKind.SPHERE_QUADRATIC:
        if not 1 <= q <= (N + 1) / 2:
            raise ValueError(f"sphere (quadratic form) needs 1 <= q <= (N+1)/2, got q={q}")
    elif kind is SurfaceKind.HYPERBOLOID:
        if N == 2:
            # the N=2 hyperboloid range is stated with a different letter; read as q
            if not 1 < q <= 1.5:
                raise ValueError(f"hyperboloid in N=2 needs 1 < q <= 3/2, got q={q}")
        elif not N / 2 <= q <= (N + 1) / 2:
            raise ValueError(f"hyperboloid needs N/2 <= q <= (N+1)/2, got q={q}")
    return 2 * q


def sandwich_norm(W1, T: WeightedOperator, W2, alpha: float) -> float:
    """||W1 T W2||_{S^alpha} with W1 on the codomain nodes and W2 on the domain nodes."""
    return schatten_norm(T.sandwich(W1, W2), alpha)


def _factor(W, E: WeightedOperator) -> np.ndarray:
    sx = np.sqrt(E.codomain.weights)
    ss = np.sqrt(E.domain.weights)
    return (sx * W)[:, None] * E.matrix * ss[None, :]


def factored_sandwich_norm(W1, E: WeightedOperator, W2, alpha: float) -> float:
    """||W1 E E* W2||_{S^alpha} without forming the grid-by-grid matrix.

    The unitarized operator is U1 U2^H with U1 = W1 E and U2 = conj(W2) E, so
    its singular values are those of R1 R2^H from economic QR factorizations.
    """
    U1 = _factor(np.asarray(W1), E)
    U2 = _factor(np.conj(W2), E)
    r1 = np.linalg.qr(U1, mode="r")
    r2 = np.linalg.qr(U2, mode="r")
    return schatten_norm(r1 @ r2.conj().T, alpha)


@dataclass
class RestrictionReport:
    kind: str
    N: int
    q: float
    schatten_exponent: float
    resolutions: list
    rows: list = field(default_factory=list)  # (resolution, trial, witness, ratio)
    max_ratio: dict = field(default_factory=dict)
    relative_change: list = field(default_factory=list)
    tolerance: float = 0.10

    @property
    def stable(self) -> bool:
        return bool(self.relative_change) and all(c < self.tolerance for c in self.relative_change)


def verify_restriction(spec: SurfaceSpec, q: float, grid, trials: int, seed: int,
                       rough_trials: int = 0, tolerance: float = 0.10) -> RestrictionReport:
    """Ratio ||W1 T_S W2||_{S^a} / (||W1||_{2q} ||W2||_{2q}) over random smooth witnesses.

    ``grid`` is one SpatialGrid or a list of them (coarse to fine).  The same
    witnesses are evaluated on every grid, so the maximum ratio per grid is a
    refinement study.  Rough witnesses (pointwise random phases) only make
    sense on one grid and are excluded from the refinement comparison.
    """
    alpha = restriction_exponent(spec.kind, spec.N, q)
    grids = list(grid) if isinstance(grid, (list, tuple)) else [grid]
    surface = build_surface(spec)
    rng = np.random.default_rng(seed)
    witnesses = [(random_bump_weight(rng, spec.N), random_bump_weight(rng, spec.N)) for _ in range(trials)]
    rough_seeds = rng.integers(0, 2**63 - 1, size=rough_trials)
    report = RestrictionReport(spec.kind.value, spec.N, q, alpha, [g.n for g in grids], tolerance=tolerance)
    for g in grids:
        E = extension_matrix(surface, g)
        pts = as_space(g).points
        best = 0.0
        for t, (f1, f2) in enumerate(witnesses):
            w1, w2 = f1(pts), f2(pts)
            r = factored_sandwich_norm(w1, E, w2, alpha) / (g.lp_norm(w1, 2 * q) * g.lp_norm(w2, 2 * q))
            report.rows.append((g.n, t, "smooth", r))
            best = max(best, r)
        report.max_ratio[g.n] = best
        if g is grids[0]:
            for t, s in enumerate(rough_seeds):
                r_rng = np.random.default_rng(int(s))
                env = random_bump_weight(r_rng, spec.N)
                w1 = env(pts) * np.exp(2j * np.pi * r_rng.random(len(pts)))
                w2 = env(pts) * np.exp(2j * np.pi * r_rng.random(len(pts)))
                r = factored_sandwich_norm(w1, E, w2, alpha) / (g.lp_norm(w1, 2 * q) * g.lp_norm(w2, 2 * q))
                report.rows.append((g.n, t, "rough", r))
    vals = [report.max_ratio[g.n] for g in grids]
    report.relative_change = [abs(b - a) / a for a, b in zip(vals, vals[1:])]
    return report


def orthonormal_lhs(system, nu, E: WeightedOperator, qprime: float, gram_tol: float = 1e-8) -> float:
    """||sum_j nu_j |E f_j|^2||_{L^q'} on the codomain grid of E."""
    f = np.asarray(system, dtype=complex)
    if f.ndim == 1:
        f = f[:, None]
    nu = np.broadcast_to(np.asarray(nu), (f.shape[1],))
    w = E.domain.weights
    gram = f.conj().T @ (w[:, None] * f)
    if np.max(np.abs(gram - np.eye(f.shape[1]))) > gram_tol:
        raise ValueError("system is not orthonormal in the surface inner product")
    ef = E.apply(f)
    rho = (np.abs(ef) ** 2) @ nu
    return E.codomain.norm(rho, qprime)


def orthonormal_rhs(nu, N: int, q: float) -> float:
    """(sum |nu_j|^a)^(1/a) with a the dual of the compact-surface Schatten exponent."""
    a = (N - 1) * q / (N * (q - 1))
    nu = np.abs(np.asarray(nu, dtype=complex))
    return float(np.sum(nu**a) ** (1 / a))


@dataclass
class DualityReport:
    identity_residuals: list = field(default_factory=list)
    holder_margins: list = field(default_factory=list)
    alpha: float = 3.0

    @property
    def max_identity_residual(self) -> float:
        return max(self.identity_residuals, default=0.0)

    @property
    def holder_violations(self) -> int:
        return sum(m < 0 for m in self.holder_margins)


def _random_density(rng, space: WeightedSpace, rank: int) -> DensityMatrix:
    cols = rng.normal(size=(space.size, rank)) + 1j * rng.normal(size=(space.size, rank))
    f = orthonormalize(cols, space)
    nu = rng.uniform(-1, 1, size=rank)
    return DensityMatrix.from_system(f, nu, space)


def duality_check(A: WeightedOperator, trials: int, seed: int, alpha: float = 3.0,
                  rank: int | None = None, rel_tol: float = 1e-12) -> DualityReport:
    """Density/trace identity and the Hölder step behind the duality principle."""
    rng = np.random.default_rng(seed)
    rep = DualityReport(alpha=alpha)
    alpha_dual = alpha / (alpha - 1) if np.isfinite(alpha) else 1.0
    r = rank or max(1, min(A.domain.size, 6))
    op_norm = schatten_norm(A, np.inf)
    for _ in range(trials):
        gamma = _random_density(rng, A.domain, r)
        W = rng.normal(size=A.codomain.size) + 1j * rng.normal(size=A.codomain.size)
        WA = A.sandwich(left=W)
        lhs = np.trace(unitarize(WA.compose(gamma.operator).compose(WA.adjoint()))).real
        rho = density_of(A, gamma)
        rhs = float(np.sum(rho * np.abs(W) ** 2 * A.codomain.weights))
        scale = gamma.schatten(1) * op_norm**2 * np.max(np.abs(W)) ** 2 + 1e-300
        rep.identity_residuals.append(abs(lhs - rhs) / scale)
        middle = A.adjoint().compose(A.sandwich(left=np.abs(W) ** 2))
        bound = gamma.schatten(alpha_dual) * schatten_norm(middle, alpha)
        rep.holder_margins.append(bound - abs(lhs) + rel_tol * bound)
    return rep


def gamma_h(surface: SurfaceGrid, h: float) -> DensityMatrix:
    """Trial operator with kernel int_{|k| <= 1/h} e^{i k.(w - w')} dk on the sphere."""
    if surface.spec.kind is not SurfaceKind.SPHERE:
        raise ValueError("the trial operator is built on the compact sphere")
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    N = surface.N
    R = 1.0 / h
    om = surface.nodes
    s = np.sqrt(np.maximum(np.sum((om[:, None, :] - om[None]) ** 2, axis=-1), 0.0))
    small = R * s < 1e-3
    s_safe = np.where(small, 1.0, s)
    if N == 2:
        K = 2 * np.pi * R * j1(R * s_safe) / s_safe
        K = np.where(small, np.pi * R**2 * (1 - (R * s) ** 2 / 8), K)
    elif N == 3:
        x = R * s_safe
        K = 4 * np.pi * (np.sin(x) - x * np.cos(x)) / s_safe**3
        K = np.where(small, 4 * np.pi / 3 * R**3 * (1 - (R * s) ** 2 / 10), K)
    else:
        raise ValueError("trial operator implemented for N in {2, 3}")
    return DensityMatrix(WeightedOperator(K, surface.space, surface.space))


def expected_optimality_slope(N: int, q: float, r: float) -> float:
    qp = q / (q - 1)
    s = N / qp + 1 - (N + r - 1) / r
    return 0.0 if abs(s) < 1e-12 else s


@dataclass
class OptimalityReport:
    N: int
    q: float
    r: float
    h_list: list
    ratios: list
    expected: float
    fit: SlopeFit
    trimmed: SlopeFit | None
    rel_tol: float = 0.15
    abs_tol_zero: float = 0.08

    @property
    def slope(self) -> float:
        return (self.trimmed or self.fit).slope

    @property
    def passed(self) -> bool:
        if abs(self.expected) < 1e-12:
            return abs(self.slope) <= self.abs_tol_zero
        return abs(self.slope - self.expected) <= self.rel_tol * abs(self.expected)


def optimality_slope(surface: SurfaceGrid, q: float, r: float, h_list, grid=None,
                     radial_extent: float = 12.0, dr: float = 0.25) -> OptimalityReport:
    """Divergence rate of ||rho_{E gamma_h E*}||_{q'} / ||gamma_h||_{S^r} as h -> 0.

    The density is radial, so by default it is sampled on a ray out to
    ``radial_extent / h``; pass ``grid`` to use a fixed grid for every h.
    """
    h_list = sorted(h_list, reverse=True)
    if len(h_list) < 4:
        raise ValueError("optimality fit needs at least 4 values of h")
    N = surface.N
    qp = q / (q - 1)
    for h in h_list:
        if surface.node_spacing() > h / 4:
            raise ValueError(
                f"h={h} is under-resolved: node spacing {surface.node_spacing():.3g} > h/4"
            )
    ratios = []
    for h in h_list:
        g = grid if grid is not None else RadialGrid(radial_extent / h, dr, N)
        gam = gamma_h(surface, h)
        E = extension_matrix(surface, g)
        rho = density_of(E, gam)
        ratios.append(as_space(g).norm(rho, qp) / gam.schatten(r))
    inv_h = [1 / h for h in h_list]
    fit, trimmed = trimmed_slope_fit(inv_h, ratios)
    return OptimalityReport(N, q, r, list(h_list), ratios, expected_optimality_slope(N, q, r), fit, trimmed)


def knapp_tube_ratio(surface: SurfaceGrid, delta: float, q: float, alpha: float = np.inf) -> float:
    """||W T_S W||_{S^alpha} / ||W||_{2q}^2 for W the indicator of the Knapp tube.

    The tube has half-widths 1/delta tangentially and 1/delta^2 along the pole
    e_N.  The nonzero spectrum of W T_S W equals that of E* W^2 E on the
    surface, whose kernel is (2 pi)^{-N} times the Fourier transform of the
    tube indicator, known in closed form.
    """
    if surface.spec.kind is not SurfaceKind.SPHERE:
        raise ValueError("Knapp witness is built for the compact sphere")
    N = surface.N
    half = np.array([1 / delta] * (N - 1) + [1 / delta**2])
    om = surface.nodes
    diff = om[:, None, :] - om[None]
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(np.abs(diff) < 1e-14, 2 * half, 2 * np.sin(diff * half) / diff)
    G = (2 * np.pi) ** (-N) * np.prod(fac, axis=-1)
    sw = np.sqrt(surface.weights)
    ev = linalg.eigvalsh(sw[:, None] * G * sw[None])
    ev = np.clip(ev, 0, None)
    vol = float(np.prod(2 * half))
    if np.isinf(alpha):
        norm = ev.max()
    else:
        norm = float(np.sum(ev**alpha) ** (1 / alpha))
    return norm / vol ** (1 / q)
