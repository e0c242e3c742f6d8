"""Uniform grids in space and time, plus a radial sampling ray."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import gamma, pi

import numpy as np

from .specmat import WeightedSpace

__all__ = ["SpatialGrid", "TorusGrid", "TimeGrid", "RadialGrid", "sphere_area"]


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N."""
    return 2 * pi ** (N / 2) / gamma(N / 2)


@dataclass(frozen=True)
class SpatialGrid:
    """Cell-centred grid on the box [-L, L]^N with n cells per axis.

    ``radius`` optionally keeps only the cells whose centres lie in the ball
    of that radius; useful when every function of interest is supported there.
    """

    L: float
    n: int
    N: int = 1
    radius: float | None = None

    def __post_init__(self):
        if self.L <= 0 or self.n < 1 or self.N < 1:
            raise ValueError("need L > 0, n >= 1, N >= 1")

    @classmethod
    def from_spacing(cls, h: float, half_width: float, N: int, radius=None) -> "SpatialGrid":
        n = 2 * int(np.ceil(half_width / h))
        return cls(L=n * h / 2, n=n, N=N, radius=radius)

    @property
    def spacing(self) -> float:
        return 2 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.N

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + 0.5) * self.spacing

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.N), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        if self.radius is not None:
            pts = pts[np.sum(pts**2, axis=1) < self.radius**2]
        return pts

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @cached_property
    def space(self) -> WeightedSpace:
        return WeightedSpace(self.points, np.full(self.size, self.cell_volume))

    def lp_norm(self, f, p: float) -> float:
        return self.space.norm(f, p)


@dataclass(frozen=True)
class TorusGrid:
    """Periodic grid of period L with n points per axis, x_j = -L/2 + j L/n."""

    L: float
    n: int
    d: int = 1

    def __post_init__(self):
        if self.n % 2:
            raise ValueError("torus grid needs an even number of points per axis")
        if self.L <= 0:
            raise ValueError("period must be positive")

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.d

    @property
    def dk(self) -> float:
        return 2 * pi / self.L

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + np.arange(self.n) * self.spacing

    @cached_property
    def freq_axis(self) -> np.ndarray:
        return 2 * pi * np.fft.fftfreq(self.n, d=self.spacing)

    @property
    def shape(self):
        return (self.n,) * self.d

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the FFT layout, shape ``self.shape``."""
        mesh = np.meshgrid(*([self.freq_axis] * self.d), indexing="ij")
        return sum(m**2 for m in mesh)

    @cached_property
    def space(self) -> WeightedSpace:
        return WeightedSpace(self.points, np.full(self.n**self.d, self.cell_volume))


@dataclass(frozen=True)
class TimeGrid:
    T: float
    m: int
    symmetric: bool = False

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("time grid needs at least two samples")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @cached_property
    def times(self) -> np.ndarray:
        lo = -self.T if self.symmetric else 0.0
        return np.linspace(lo, self.T, self.m)

    @cached_property
    def weights(self) -> np.ndarray:
        dt = self.times[1] - self.times[0]
        w = np.full(self.m, dt)
        w[0] = w[-1] = dt / 2
        return w

    def refined(self) -> "TimeGrid":
        return TimeGrid(self.T, 2 * self.m - 1, self.symmetric)


@dataclass(frozen=True)
class RadialGrid:
    """Samples along the first coordinate axis for radial functions in R^N.

    Weights are |S^{N-1}| r^{N-1} dr, so integrals of radial functions come
    out right without sampling the whole space.
    """

    R: float
    dr: float
    N: int = 2

    @cached_property
    def radii(self) -> np.ndarray:
        return np.arange(self.dr / 2, self.R, self.dr)

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.zeros((len(self.radii), self.N))
        pts[:, 0] = self.radii
        return pts

    @cached_property
    def space(self) -> WeightedSpace:
        w = sphere_area(self.N) * self.radii ** (self.N - 1) * self.dr
        return WeightedSpace(self.points, w)
