"""Scattering matrices: exact 1D transfer matrices and the N-dimensional
on-shell representation through the free boundary resolvent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .fitting import slope_fit
from .grids import SpatialGrid
from .resolvent import PotentialField, SpectralParameter, birman_schwinger, perturbed_sandwich
from .specmat import WeightedOperator, WeightedSpace, schatten_norm, unitarize
from .surface import SurfaceGrid, SurfaceKind, SurfaceSpec, build_surface

__all__ = [
    "smatrix_1d",
    "square_well_transmission",
    "gamma0",
    "smatrix_alpha",
    "sphere_for",
    "SMatrixResult",
    "smatrix",
    "born_term",
    "ContinuityReport",
    "continuity_sweep",
]


def _cell_transfer(kc: complex, h: float) -> np.ndarray:
    # (psi, psi') across a cell where psi'' = -kc^2 psi
    if abs(kc) * h < 1e-8:
        return np.array([[1.0, h], [-(kc**2) * h, 1.0]], dtype=complex)
    c, s = np.cos(kc * h), np.sin(kc * h)
    return np.array([[c, s / kc], [-kc * s, c]], dtype=complex)


def smatrix_1d(V: PotentialField, lam: float) -> np.ndarray:
    """[[t, r_right], [r_left, t_right]] for V piecewise constant on the grid cells.

    Incoming from the left: e^{ikx} + r_left e^{-ikx} on the left,
    t e^{ikx} on the right; symmetric for the other side.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    grid = V.grid
    if not isinstance(grid, SpatialGrid) or grid.N != 1:
        raise TypeError("smatrix_1d needs a 1D SpatialGrid")
    h = grid.spacing
    k = np.sqrt(lam)
    M = np.eye(2, dtype=complex)
    for v in V.samples:
        M = _cell_transfer(np.sqrt(complex(lam - v)), h) @ M
    xl, xr = -grid.L, grid.L
    # plane-wave bases at the two ends: columns (e^{ikx}, e^{-ikx}) in (psi, psi')
    Pl = np.array([[np.exp(1j * k * xl), np.exp(-1j * k * xl)],
                   [1j * k * np.exp(1j * k * xl), -1j * k * np.exp(-1j * k * xl)]])
    Pr = np.array([[np.exp(1j * k * xr), np.exp(-1j * k * xr)],
                   [1j * k * np.exp(1j * k * xr), -1j * k * np.exp(-1j * k * xr)]])
    # amplitudes right = Q amplitudes left
    Q = linalg.solve(Pr, M @ Pl)
    # left incidence: (1, r) -> (t, 0)
    r_left = -Q[1, 0] / Q[1, 1]
    t_left = Q[0, 0] + Q[0, 1] * r_left
    # right incidence: (0, t') <- (r', 1): Q (0, t') = (r', 1)
    t_right = 1 / Q[1, 1]
    r_right = Q[0, 1] * t_right
    return np.array([[t_left, r_right], [r_left, t_right]])


def square_well_transmission(lam: float, depth: float, width: float) -> complex:
    """Closed-form t for V = -depth on [0, width]."""
    k = np.sqrt(lam)
    kp = np.sqrt(lam + depth)
    denom = np.cos(kp * width) - 1j * (k**2 + kp**2) / (2 * k * kp) * np.sin(kp * width)
    return complex(np.exp(-1j * k * width) / denom)


def gamma0(lam: float, sphere: SurfaceGrid | WeightedSpace, space: WeightedSpace) -> WeightedOperator:
    """psi -> 2^{-1/2} lam^{(N-2)/4} psihat(sqrt(lam) omega) as an operator into L^2(sphere)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    S = sphere.space if isinstance(sphere, SurfaceGrid) else sphere
    N = S.dim
    if N not in (2, 3):
        raise ValueError("N must be 2 or 3")
    pref = 2**-0.5 * lam ** ((N - 2) / 4) * (2 * np.pi) ** (-N / 2)
    K = pref * np.exp(-1j * np.sqrt(lam) * (S.points @ space.points.T))
    return WeightedOperator(K, space, S)


def smatrix_alpha(N: int, q: float) -> float:
    if N == 2:
        if not 1 < q <= 1.5:
            raise ValueError(f"N=2 needs 1 < q <= 3/2, got {q}")
    elif N >= 3:
        if not N / 2 <= q <= (N + 1) / 2:
            raise ValueError(f"N>=3 needs N/2 <= q <= (N+1)/2, got {q}")
    else:
        raise ValueError("N must be at least 2")
    return max(2.0, (N - 1) * q / (N - q))


def sphere_for(V: PotentialField, lam: float, extra: int = 12) -> SurfaceGrid:
    """Unit-sphere rule with enough nodes for e^{-i sqrt(lam) omega.x} over supp V."""
    N = V.space.dim
    pts = V.space.points[V.support]
    R = float(np.sqrt((pts**2).sum(1)).max()) if len(pts) else 1.0
    res = max(int(np.sqrt(lam) * R) + extra, 8)
    if N == 2:
        res = 4 * res
    return build_surface(SurfaceSpec(SurfaceKind.SPHERE, N, res))


@dataclass
class SMatrixResult:
    lam: float
    alpha: float
    S: np.ndarray = field(repr=False)   # unitarized on L^2(sphere)
    deficit: float
    unitarity: float                    # ||S* S - 1||_inf
    bs_norm: float                      # ||A(lam + i0)||_inf


def smatrix(V: PotentialField, lam: float, q: float, sphere: SurfaceGrid | None = None) -> SMatrixResult:
    """S(lam) = 1 - 2 pi i Gamma0 sqrt|V| (1 + A)^{-1} sqrt(V) Gamma0*,
    A = sqrt(V) R0(lam + i0) sqrt|V| built from the outgoing boundary kernel."""
    N = V.space.dim
    alpha = smatrix_alpha(N, q)
    sphere = sphere if sphere is not None else sphere_for(V, lam)
    S_space = sphere.space
    m = S_space.size
    supp = V.support
    if not supp.any():
        return SMatrixResult(lam, alpha, np.eye(m, dtype=complex), 0.0, 0.0, 0.0)
    sub = V.space.subspace(supp)
    A, bs = birman_schwinger(V, SpectralParameter.boundary(lam, 1), alpha=np.inf)
    U = unitarize(A)
    inner = linalg.solve(np.eye(U.shape[0]) + U, np.eye(U.shape[0]))
    perturbed_sandwich(A)  # condition check only
    G = gamma0(lam, S_space, sub)
    middle = WeightedOperator.from_unitary_matrix(inner, sub, sub)
    T = G.compose(middle.sandwich(V.sqrt_abs[supp], V.sqrt_v[supp])).compose(G.adjoint())
    S = np.eye(m) - 2j * np.pi * unitarize(T)
    deficit = schatten_norm(S - np.eye(m), alpha)
    unit = float(np.linalg.norm(S.conj().T @ S - np.eye(m), 2))
    return SMatrixResult(lam, alpha, S, deficit, unit, bs)


def born_term(V: PotentialField, lam: float, sphere: SurfaceGrid) -> np.ndarray:
    """First-order part -2 pi i Gamma0 V Gamma0*, unitarized."""
    supp = V.support
    sub = V.space.subspace(supp)
    G = gamma0(lam, sphere, sub)
    T = G.compose(WeightedOperator.multiplication(V.samples[supp], sub)).compose(G.adjoint())
    return -2j * np.pi * unitarize(T)


@dataclass
class ContinuityReport:
    lambdas: list
    differences: list
    alpha: float

    def fit(self):
        steps = np.diff(self.lambdas)
        return slope_fit(steps, self.differences)


def continuity_sweep(V: PotentialField, lambda_list, q: float, sphere: SurfaceGrid | None = None) -> ContinuityReport:
    lams = list(lambda_list)
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda_list must be increasing")
    sphere = sphere if sphere is not None else sphere_for(V, lams[-1])
    Ss = [smatrix(V, l, q, sphere) for l in lams]
    alpha = Ss[0].alpha
    diffs = [schatten_norm(b.S - a.S, alpha) for a, b in zip(Ss, Ss[1:])]
    return ContinuityReport(lams, diffs, alpha)
