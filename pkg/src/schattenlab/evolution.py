"""Free propagators on a periodic grid, mixed space-time norms, and the
orthonormal Strichartz experiments built from them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .fitting import SlopeFit, slope_fit
from .grids import TimeGrid, TorusGrid
from .specmat import DensityMatrix, schatten_norm

__all__ = [
    "SYMBOLS",
    "symbol_phase",
    "propagate",
    "propagator_matrix",
    "mixed_norm",
    "check_strichartz_pair",
    "check_sandwich_pair",
    "gaussian_system",
    "strichartz_density",
    "strichartz_experiment",
    "StrichartzReport",
    "mixed_sandwich",
    "SandwichResult",
    "inhomogeneous_check",
    "InhomogeneousReport",
    "duhamel_filon",
]

SYMBOLS = ("schrodinger", "half_wave", "pseudo_relativistic")


def symbol_phase(grid: TorusGrid, symbol: str) -> np.ndarray:
    """Real phase function s(k) so that the propagator is e^{i t s(k)}."""
    k2 = grid.k2
    if symbol == "schrodinger":
        return -k2
    if symbol == "half_wave":
        return np.sqrt(k2)
    if symbol == "pseudo_relativistic":
        return np.sqrt(1 + k2)
    raise ValueError(f"unknown symbol {symbol!r}; choose from {SYMBOLS}")


def _axes(d: int):
    return tuple(range(-d, 0))


def propagate(f, t: float, grid: TorusGrid, symbol: str = "schrodinger") -> np.ndarray:
    """Apply the Fourier multiplier e^{i t s(k)} over the last ``grid.d`` axes of ``f``.

    ``f`` may carry leading batch axes; a flat last axis of length n^d is
    also accepted and reshaped.
    """
    f = np.asarray(f, dtype=complex)
    flat = f.shape[-1] == grid.n**grid.d and grid.d > 1
    if flat:
        f = f.reshape(f.shape[:-1] + grid.shape)
    ax = _axes(grid.d)
    out = np.fft.ifftn(np.fft.fftn(f, axes=ax) * np.exp(1j * t * symbol_phase(grid, symbol)), axes=ax)
    if flat:
        out = out.reshape(out.shape[: -grid.d] + (-1,))
    return out


def propagator_matrix(t: float, grid: TorusGrid, symbol: str = "schrodinger") -> np.ndarray:
    """Unitary matrix of the propagator on nodal values (1D grids)."""
    if grid.d != 1:
        raise ValueError("dense propagator matrix only for d = 1")
    ph = np.exp(1j * t * symbol_phase(grid, symbol))
    return np.fft.ifft(ph[:, None] * np.fft.fft(np.eye(grid.n), axis=0), axis=0)


def mixed_norm(F, p: float, q: float, time_grid: TimeGrid, grid: TorusGrid) -> float:
    """||F||_{L^p_t L^q_x}: trapezoid in time of ||F(t)||_{L^q}^p, then the 1/p power."""
    a = np.abs(np.asarray(F)).reshape(time_grid.m, -1)
    dv = grid.cell_volume
    if np.isinf(q):
        inner = a.max(axis=1)
    else:
        inner = (np.sum(a**q, axis=1) * dv) ** (1 / q)
    if np.isinf(p):
        return float(inner.max())
    return float(np.sum(time_grid.weights * inner**p) ** (1 / p))


def check_strichartz_pair(d: int, p: float, q: float) -> None:
    if not np.isclose(2 / p + d / q, d):
        raise ValueError(f"need 2/p + d/q = d, got 2/{p} + {d}/{q} = {2 / p + d / q}")
    upper = np.inf if d == 1 else 1 + 2 / (d - 1)
    if not 1 <= q < upper:
        raise ValueError(f"need 1 <= q < 1 + 2/(d-1) = {upper}, got q={q}")


def check_sandwich_pair(d: int, p: float, q: float) -> None:
    if not np.isclose(2 / p + d / q, 1):
        raise ValueError(f"need 2/p + d/q = 1, got {2 / p + d / q}")
    if not q > d + 1:
        raise ValueError(f"need q > d + 1 = {d + 1}, got q={q}")


def gaussian_system(grid: TorusGrid, M: int, dk: float = 3.0, sigma: float = 1.0,
                    center: float = 0.0) -> np.ndarray:
    """M Gaussians with centred momenta dk*(j - (M-1)/2), orthonormalized.

    Symmetric (Löwdin) orthonormalization keeps each function close to its
    Gaussian, which keeps the wave packets where the box was sized for them.
    Returns an (M, n) array of nodal values.
    """
    if grid.d != 1:
        raise ValueError("gaussian_system is one-dimensional")
    x = grid.axis
    ks = dk * (np.arange(M) - (M - 1) / 2)
    F = np.exp(-((x - center) ** 2) / (2 * sigma**2))[None, :] * np.exp(1j * ks[:, None] * x[None, :])
    G = (F.conj() @ F.T) * grid.spacing
    ev, U = linalg.eigh(G)
    if ev.min() <= 1e-12 * ev.max():
        raise ValueError("Gaussian family is numerically dependent; increase dk")
    S = (U * ev ** -0.5) @ U.conj().T
    return S.T @ F


def strichartz_density(system, nu, time_grid: TimeGrid, grid: TorusGrid,
                       symbol: str = "schrodinger") -> np.ndarray:
    """rho(t, x) = sum_j nu_j |e^{itD} f_j(x)|^2 on the time grid, shape (m, n)."""
    f = np.asarray(system, dtype=complex)
    nu = np.asarray(nu)
    fh = np.fft.fft(f, axis=-1)
    phase = symbol_phase(grid, symbol)
    out = np.empty((time_grid.m, f.shape[-1]), dtype=complex if np.iscomplexobj(nu) else float)
    for i, t in enumerate(time_grid.times):
        u = np.fft.ifft(fh * np.exp(1j * t * phase)[None, :], axis=-1)
        out[i] = nu @ (np.abs(u) ** 2)
    return out


@dataclass
class StrichartzReport:
    d: int
    p: float
    q: float
    Ms: list
    lhs: list
    rhs: list
    lhs_random: list
    rhs_random: list
    time_samples: list
    box: float
    n: int
    fit: SlopeFit | None = None

    @property
    def ratios(self) -> np.ndarray:
        return np.asarray(self.lhs) / np.asarray(self.rhs)

    @property
    def ratios_random(self) -> np.ndarray:
        return np.asarray(self.lhs_random) / np.asarray(self.rhs_random)

    @property
    def spread(self) -> float:
        r = self.ratios
        return float(r.max() / r.min())

    @property
    def slope(self) -> float:
        return self.fit.slope if self.fit else float("nan")


def _lhs_converged(f, nu, T, p, q, grid, m0, rtol, max_m):
    m = m0
    prev = None
    while True:
        tg = TimeGrid(T, m)
        val = mixed_norm(strichartz_density(f, nu, tg, grid), p, q, tg, grid)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return val, m
        if m >= max_m:
            return val, m
        prev = val
        m = 2 * m - 1


def strichartz_experiment(d: int, p: float, q: float, M: int, seed: int, dk: float = 3.0,
                          sigma: float = 1.0, n: int = 16384, m0: int = 257,
                          rtol: float = 0.01, max_m: int = 8193) -> StrichartzReport:
    """LHS/RHS of the orthonormal Strichartz inequality for M in {1, 2, 4, ..., M}.

    The time window T = 3 sigma/dk is where the lattice Gaussians separate;
    the torus is sized so the fastest packet stays 8 sigma from wrap-around.
    """
    check_strichartz_pair(d, p, q)
    if d != 1:
        raise NotImplementedError("the Gaussian ensemble experiment runs in d = 1")
    Ms = [1]
    while Ms[-1] * 2 <= M:
        Ms.append(Ms[-1] * 2)
    T = 3 * sigma / dk
    kmax = dk * (Ms[-1] - 1) / 2
    L = 2 * (2 * kmax * T + 8 * sigma)
    grid = TorusGrid(L, n, 1)
    if np.pi / grid.spacing < 1.25 * (kmax + 6 / sigma):
        raise ValueError("grid too coarse for the fastest wave packet; increase n")
    rng = np.random.default_rng(seed)
    s = 2 * q / (q + 1)
    rep = StrichartzReport(d, p, q, Ms, [], [], [], [], [], L, n)
    for Mi in Ms:
        f = gaussian_system(grid, Mi, dk, sigma)
        ones = np.ones(Mi)
        lhs, m = _lhs_converged(f, ones, T, p, q, grid, m0, rtol, max_m)
        rep.lhs.append(lhs)
        rep.rhs.append(float(np.sum(ones**s) ** (1 / s)))
        rep.time_samples.append(m)
        nu = rng.uniform(0, 1, Mi)
        nu[nu == 0] = 1.0
        lhs_r, _ = _lhs_converged(f, nu, T, p, q, grid, m0, rtol, max_m)
        rep.lhs_random.append(lhs_r)
        rep.rhs_random.append(float(np.sum(nu**s) ** (1 / s)))
    if len(Ms) >= 3:
        rep.fit = slope_fit(Ms, rep.lhs)
    return rep


@dataclass
class SandwichResult:
    norm: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.norm / self.rhs if self.rhs > 0 else 0.0


def _space_time_factor(W, time_grid: TimeGrid, grid: TorusGrid, symbol: str) -> np.ndarray:
    W = np.asarray(W).reshape(time_grid.m, grid.n)
    blocks = []
    for i, t in enumerate(time_grid.times):
        P = propagator_matrix(t, grid, symbol)
        blocks.append(np.sqrt(time_grid.weights[i] / (2 * np.pi)) * W[i][:, None] * P)
    return np.vstack(blocks)


def mixed_sandwich(W1, W2, time_grid: TimeGrid, grid: TorusGrid, p: float, q: float,
                   alpha: float | None = None, symbol: str = "schrodinger") -> SandwichResult:
    """||W1 T W2||_{S^alpha} for the space-time operator with kernel
    (2 pi)^{-1} W1(t,x) e^{i(t-t')D}(x,x') W2(t',x'), alpha defaulting to q.

    The operator factors as (W1 E)(conj(W2) E)^* through L^2 of the torus,
    so only two tall QR factorizations are needed.
    """
    check_sandwich_pair(grid.d, p, q)
    alpha = q if alpha is None else alpha
    U1 = _space_time_factor(W1, time_grid, grid, symbol)
    U2 = _space_time_factor(np.conj(W2), time_grid, grid, symbol)
    r1 = np.linalg.qr(U1, mode="r")
    r2 = np.linalg.qr(U2, mode="r")
    norm = schatten_norm(r1 @ r2.conj().T, alpha)
    rhs = mixed_norm(W1, p, q, time_grid, grid) * mixed_norm(W2, p, q, time_grid, grid)
    return SandwichResult(norm, rhs)


def _phi(theta):
    """int_0^1 e^{i theta u} du and int_0^1 u e^{i theta u} du, stable near 0."""
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    e = np.exp(1j * th)
    p0 = (e - 1) / (1j * th)
    p1 = e / (1j * th) - (e - 1) / (1j * th) ** 2
    t = theta
    p0 = np.where(small, 1 + 1j * t / 2 - t**2 / 6, p0)
    p1 = np.where(small, 0.5 + 1j * t / 3 - t**2 / 8, p1)
    return p0, p1


def duhamel_filon(R_hat, times, omega, origin: int) -> np.ndarray:
    """B(t_i) = int_0^{t_i} e^{i s omega} * R_hat(s) ds for every node.

    ``R_hat`` has shape (m, n, n) and is interpolated linearly between nodes;
    the oscillatory factor is integrated exactly on each panel.
    """
    m = len(times)
    out = np.zeros_like(R_hat, dtype=complex)
    for direction in (1, -1):
        acc = np.zeros(R_hat.shape[1:], dtype=complex)
        j = origin
        while 0 <= j + direction < m:
            a, b = j, j + direction
            dt = times[b] - times[a]
            p0, p1 = _phi(omega * dt)
            panel = dt * np.exp(1j * times[a] * omega) * (R_hat[a] * p0 + (R_hat[b] - R_hat[a]) * p1)
            acc = acc + panel
            out[b] = acc
            j = b
    return out


@dataclass
class InhomogeneousReport:
    lhs: float
    gamma0_norm: float
    forcing_norm: float
    schatten_exponent: float
    density: np.ndarray = field(repr=False)

    @property
    def rhs(self) -> float:
        return self.gamma0_norm + self.forcing_norm

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def inhomogeneous_check(gamma0: DensityMatrix, R, p: float, q: float, time_grid: TimeGrid,
                        grid: TorusGrid) -> InhomogeneousReport:
    """Solve i d/dt gamma = [-Laplacian, gamma] + R(t) from gamma(0) = gamma0 and
    compare ||rho||_{L^p_t L^q_x} with the Schatten norms of the data.

    ``R`` maps t to a Hermitian matrix in orthonormal position coordinates
    (the unitarized form).  Time t = 0 must be a node of ``time_grid``.
    """
    check_strichartz_pair(grid.d, p, q)
    if grid.d != 1:
        raise NotImplementedError("inhomogeneous check runs on a 1D torus")
    times = time_grid.times
    hits = np.flatnonzero(np.isclose(times, 0.0, atol=1e-14))
    if len(hits) != 1:
        raise ValueError("time grid must contain t = 0 exactly once")
    origin = int(hits[0])
    n = grid.n
    F = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
    k2 = grid.k2
    omega = k2[:, None] - k2[None, :]

    g0 = F @ gamma0.unitary() @ F.conj().T
    Rs = np.stack([np.asarray(R(t), dtype=complex) for t in times])
    R_hat = F[None] @ Rs @ F.conj().T[None]
    B = duhamel_filon(R_hat, times, omega, origin)

    absR = []
    for Rt in Rs:
        ev, V = linalg.eigh(0.5 * (Rt + Rt.conj().T))
        absR.append((V * np.abs(ev)) @ V.conj().T)
    absR_hat = F[None] @ np.stack(absR) @ F.conj().T[None]
    # the forcing norm integrates over the whole window, not just up to t
    C = duhamel_filon(absR_hat, times, omega, origin)
    forcing = C[-1] - C[0]

    rho = np.empty((len(times), n))
    for i, t in enumerate(times):
        g_hat = np.exp(-1j * t * omega) * (g0 - 1j * B[i])
        g_pos = F.conj().T @ g_hat @ F
        rho[i] = np.real(np.diag(g_pos)) / grid.spacing
    s = 2 * q / (q + 1)
    lhs = mixed_norm(rho, p, q, time_grid, grid)
    return InhomogeneousReport(
        lhs=lhs,
        gamma0_norm=gamma0.schatten(s),
        forcing_norm=schatten_norm(forcing, s),
        schatten_exponent=s,
        density=rho,
    )
