"""Density-matrix Hartree evolution on a 1D torus.

    i d/dt gamma = [-Laplacian + w * rho_gamma, gamma]

Each window [t, t + tau] is solved as a fixed point of the Duhamel map in
the interaction frame of the free flow. Time integrals inside a window use
Gauss-Legendre collocation, so the scheme is an implicit Gauss Runge-Kutta
method iterated by Picard: traces are conserved exactly and tr(gamma^2) up
to the Picard tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .evolution import check_strichartz_pair
from .grids import TorusGrid
from .specmat import DensityMatrix, _lp

__all__ = [
    "Interaction",
    "HartreeState",
    "ContractionError",
    "rho",
    "duhamel_step",
    "evolve",
    "HartreeReport",
    "initial_window",
    "nls_split_step",
]


class ContractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Interaction:
    samples: np.ndarray
    grid: TorusGrid

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.shape != (self.grid.n,):
            raise ValueError("interaction must be sampled on the 1D torus axis")
        if np.iscomplexobj(s) and np.abs(s.imag).max() > 0:
            raise ValueError("complex interactions are not supported (conservation checks assume real w)")
        object.__setattr__(self, "samples", s.real.astype(float))

    @classmethod
    def from_function(cls, f, grid: TorusGrid) -> "Interaction":
        return cls(np.asarray(f(grid.axis), dtype=float), grid)

    def norm(self, r: float) -> float:
        return self.grid.space.norm(self.samples, r)

    @cached_property
    def _fourier(self) -> np.ndarray:
        # axis[n/2] is the origin; roll so index 0 holds w(0)
        return np.fft.fft(np.roll(self.samples, -self.grid.n // 2))

    def convolve(self, density: np.ndarray) -> np.ndarray:
        out = np.fft.ifft(self._fourier * np.fft.fft(density)) * self.grid.spacing
        return out.real


@dataclass
class HartreeState:
    gamma: DensityMatrix
    t: float = 0.0

    @property
    def grid_size(self) -> int:
        return self.gamma.space.size


def rho(gamma: DensityMatrix) -> np.ndarray:
    """Kernel diagonal; sum(rho) * dx equals tr gamma."""
    return np.real(gamma.kernel_diagonal())


class _Frame:
    """Fourier-basis helpers for one torus."""

    def __init__(self, grid: TorusGrid):
        if grid.d != 1:
            raise ValueError("the Hartree solver runs on a 1D torus")
        self.grid = grid
        n = grid.n
        self.F = np.fft.fft(np.eye(n), axis=0) / np.sqrt(n)
        self.k2 = grid.freq_axis**2

    def to_fourier(self, u):
        return self.F @ u @ self.F.conj().T

    def to_position(self, uh):
        return self.F.conj().T @ uh @ self.F

    def density(self, uh):
        d = np.einsum("ai,ab,bi->i", self.F.conj(), uh, self.F, optimize=True)
        return d.real / self.grid.spacing

    def phase(self, s):
        return np.exp(-1j * s * self.k2)

    def potential(self, v):
        return (self.F * v[None, :]) @ self.F.conj().T


def _gauss_collocation(s: int):
    x, w = np.polynomial.legendre.leggauss(s)
    c = (x + 1) / 2
    b = w / 2
    # A_ij = int_0^{c_i} l_j(u) du for the Lagrange basis on the nodes c
    A = np.zeros((s, s))
    for j in range(s):
        e = np.zeros(s)
        e[j] = 1.0
        coef = np.polynomial.polynomial.polyfit(c, e, s - 1)
        integ = np.polynomial.polynomial.polyint(coef)
        A[:, j] = np.polynomial.polynomial.polyval(c, integ)
    return c, b, A


def _schatten_herm(u, alpha):
    return _lp(np.abs(np.linalg.eigvalsh(0.5 * (u + u.conj().T))), alpha)


@dataclass
class _Window:
    gamma_hat: np.ndarray       # lab frame, Fourier basis, at window end
    stage_rho: list             # densities at the stage times
    stage_times: np.ndarray
    stage_weights: np.ndarray
    contraction: list
    iterations: int


def _solve_window(frame: _Frame, w: Interaction, gh0: np.ndarray, t0: float, tau: float,
                  tol: float, max_iter: int, nodes: int, alpha: float) -> _Window | None:
    c, b, A = _gauss_collocation(nodes)
    phases = [frame.phase(ci * tau) for ci in c]
    Y = [gh0.copy() for _ in c]
    scale = max(_schatten_herm(gh0, alpha), 1e-300)
    diffs = []
    for it in range(1, max_iter + 1):
        K, rhos = [], []
        for Yj, ph in zip(Y, phases):
            lab = ph[:, None] * Yj * ph.conj()[None, :]
            r = frame.density(lab)
            Vh = frame.potential(w.convolve(r))
            comm = -1j * (Vh @ lab - lab @ Vh)
            K.append(ph.conj()[:, None] * comm * ph[None, :])
            rhos.append(r)
        Ynew = [gh0 + tau * sum(A[j, l] * K[l] for l in range(nodes)) for j in range(nodes)]
        diff = max(_schatten_herm(Ynew[j] - Y[j], alpha) for j in range(nodes)) / scale
        diffs.append(diff)
        Y = Ynew
        if diff < tol:
            end_I = gh0 + tau * sum(b[l] * K[l] for l in range(nodes))
            ph = frame.phase(tau)
            end = ph[:, None] * end_I * ph.conj()[None, :]
            factors = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
            return _Window(end, rhos, t0 + c * tau, b * tau, factors, it)
        if it > 3 and diffs[-1] > diffs[-2] > diffs[-3]:
            return None  # diverging
    return None


def _step(frame, w, gh, t, tau, tol, max_iter, nodes, alpha, halvings, windows):
    win = _solve_window(frame, w, gh, t, tau, tol, max_iter, nodes, alpha)
    if win is not None:
        windows.append(win)
        return win.gamma_hat
    if halvings == 0:
        raise ContractionError("contraction window too large")
    mid = _step(frame, w, gh, t, tau / 2, tol, max_iter, nodes, alpha, halvings - 1, windows)
    return _step(frame, w, mid, t + tau / 2, tau / 2, tol, max_iter, nodes, alpha, halvings - 1, windows)


def duhamel_step(state: HartreeState, w: Interaction, tau: float, tol: float = 1e-13,
                 max_iter: int = 60, nodes: int = 8, q: float = 2.0,
                 _windows: list | None = None) -> HartreeState:
    """Advance by tau; on non-convergence the window is halved (at most six times)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    frame = _Frame(w.grid)
    alpha = 2 * q / (q + 1)
    gh = frame.to_fourier(state.gamma.unitary())
    windows = _windows if _windows is not None else []
    gh = _step(frame, w, gh, state.t, tau, tol, max_iter, nodes, alpha, 6, windows)
    gh = 0.5 * (gh + gh.conj().T)
    u = frame.to_position(gh)
    return HartreeState(DensityMatrix.from_unitary(0.5 * (u + u.conj().T), state.gamma.space), state.t + tau)


def initial_window(gamma0: DensityMatrix, w: Interaction, p: float, q: float,
                   safety: float = 0.25, cap: float = 0.05) -> float:
    """tau ~ safety * (||w||_{q'} R^2)^{-p'} with R the Schatten norm of gamma0."""
    pprime = p / (p - 1)
    qprime = q / (q - 1) if q > 1 else np.inf
    R = gamma0.schatten(2 * q / (q + 1))
    strength = w.norm(qprime) * R**2
    if strength == 0:
        return cap
    return float(min(cap, safety * strength ** (-pprime)))


@dataclass
class HartreeReport:
    times: list
    traces: list
    schatten: list
    hermiticity: list
    min_eigenvalue: list
    density_norm: float
    contraction: list = field(default_factory=list)
    schatten_exponent: float = 4 / 3

    @property
    def trace_drift(self) -> float:
        t0 = self.traces[0]
        return max(abs(t - t0) for t in self.traces) / max(abs(t0), 1e-300)

    @property
    def schatten_drift(self) -> float:
        s0 = self.schatten[0]
        return max(abs(s - s0) for s in self.schatten) / max(s0, 1e-300)


def evolve(gamma0: DensityMatrix, w: Interaction, T: float, tau: float | None = None,
           monitors=(4.0, 2.0), tol: float = 1e-13, nodes: int = 8):
    """Chain windows to time T. Returns (trajectory of HartreeState, HartreeReport)."""
    p, q = monitors
    check_strichartz_pair(1, p, q)
    alpha = 2 * q / (q + 1)
    if T < 0:
        raise ValueError("T must be non-negative")
    tau = initial_window(gamma0, w, p, q) if tau is None else tau
    state = HartreeState(gamma0, 0.0)
    traj = [state]

    def record(st):
        u = st.gamma.unitary()
        ev = st.gamma.eigenvalues()
        rep.times.append(st.t)
        rep.traces.append(st.gamma.trace().real)
        rep.schatten.append(_lp(np.abs(ev), alpha))
        rep.hermiticity.append(float(np.linalg.norm(u - u.conj().T) / max(np.linalg.norm(u), 1e-300)))
        rep.min_eigenvalue.append(float(ev.min() / max(np.abs(ev).max(), 1e-300)))

    rep = HartreeReport([], [], [], [], [], 0.0, schatten_exponent=alpha)
    record(state)
    windows: list = []
    steps = int(np.ceil(T / tau - 1e-9)) if T > 0 else 0
    for i in range(steps):
        h = min(tau, T - state.t)
        state = duhamel_step(state, w, h, tol=tol, nodes=nodes, q=q, _windows=windows)
        traj.append(state)
        record(state)
    total = 0.0
    for win in windows:
        rep.contraction.extend(win.contraction)
        for r, wt in zip(win.stage_rho, win.stage_weights):
            total += wt * w.grid.space.norm(r, q) ** p
    rep.density_norm = float(total ** (1 / p))
    return traj, rep


def nls_split_step(u0, w: Interaction, T: float, steps: int) -> np.ndarray:
    """Strang splitting for i u_t = -u_xx + (w * |u|^2) u; reference solver."""
    grid = w.grid
    k2 = grid.freq_axis**2
    dt = T / steps
    lin = np.exp(-1j * dt * k2)
    u = np.asarray(u0, dtype=complex).copy()
    for _ in range(steps):
        u = u * np.exp(-0.5j * dt * w.convolve(np.abs(u) ** 2))
        u = np.fft.ifft(lin * np.fft.fft(u))
        u = u * np.exp(-0.5j * dt * w.convolve(np.abs(u) ** 2))
    return u
