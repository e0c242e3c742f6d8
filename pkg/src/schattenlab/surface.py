"""Quadrature rules on spheres and model quadratic surfaces, and the
Fourier extension operator built on them.

Quadratic surfaces are written as graphs xi_N = phi(xi') over a truncated
base, and their weight is the base weight times sqrt(1 + |grad phi|^2) / |grad R|
where R is the defining quadratic polynomial.  For the paraboloid this factor
is identically 1, so the measure is plain Lebesgue measure on the base.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grids import SpatialGrid
from .specmat import WeightedOperator, WeightedSpace

__all__ = [
    "SurfaceKind",
    "SurfaceSpec",
    "SurfaceGrid",
    "build_surface",
    "extension_matrix",
    "ts_operator",
    "surface_measure_ft",
    "knapp_cap",
    "knapp_extension_norm",
    "as_space",
    "CONE_EXCISION",
    "SpatialGrid",
]

# fraction of the truncation radius cut out around the cone vertex
CONE_EXCISION = 0.05


class SurfaceKind(str, Enum):
    SPHERE = "sphere"
    PARABOLOID = "paraboloid"
    CONE = "cone"
    HYPERBOLOID = "hyperboloid"
    SPHERE_QUADRATIC = "sphere_quadratic"

    @property
    def compact(self) -> bool:
        return self in (SurfaceKind.SPHERE, SurfaceKind.SPHERE_QUADRATIC)


@dataclass(frozen=True)
class SurfaceSpec:
    kind: SurfaceKind
    N: int
    resolution: int
    truncation_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SurfaceKind(self.kind))
        if self.N < 2:
            raise ValueError("surfaces live in dimension N >= 2")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if not self.kind.compact and self.truncation_radius <= 0:
            raise ValueError("non-compact surfaces need a positive truncation radius")


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    spec: SurfaceSpec
    space: WeightedSpace
    normal_gradient: np.ndarray | None = None

    @property
    def nodes(self) -> np.ndarray:
        return self.space.points

    @property
    def weights(self) -> np.ndarray:
        return self.space.weights

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def size(self) -> int:
        return self.space.size

    def node_spacing(self) -> float:
        """Typical angular gap between neighbouring nodes (sphere kinds)."""
        if self.spec.N == 2:
            return 2 * np.pi / self.size
        # product rule: nt polar nodes, 2 nt azimuthal nodes
        return np.pi / self.spec.resolution


def _circle(m: int):
    th = 2 * np.pi * np.arange(m) / m
    return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2 * np.pi / m)


def _sphere3(nt: int):
    x, wx = np.polynomial.legendre.leggauss(nt)
    nphi = 2 * nt
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1 - x**2)
    pts = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(x, np.ones(nphi))],
        axis=-1,
    ).reshape(-1, 3)
    w = np.outer(wx, np.full(nphi, 2 * np.pi / nphi)).ravel()
    return pts, w


def unit_sphere_rule(N: int, resolution: int):
    """Nodes and weights (surface measure) on the unit sphere in R^N, N in {2, 3}."""
    if N == 2:
        return _circle(resolution)
    if N == 3:
        return _sphere3(resolution)
    raise ValueError(f"sphere rule not available for N={N}")


def _gl(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _base_rule(N: int, K: float, n: int, inner: float = 0.0):
    """Rule for Lebesgue measure on {inner <= |xi'| <= K} in R^(N-1)."""
    if N == 2:
        if inner > 0:
            x, w = _gl(inner, K, n)
            return np.concatenate([-x[::-1], x])[:, None], np.concatenate([w[::-1], w])
        x, w = _gl(-K, K, n)
        return x[:, None], w
    if N == 3:
        r, wr = _gl(inner, K, n)
        nphi = 2 * n
        phi = 2 * np.pi * np.arange(nphi) / nphi
        pts = np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], axis=-1).reshape(-1, 2)
        w = np.outer(wr * r, np.full(nphi, 2 * np.pi / nphi)).ravel()
        return pts, w
    raise ValueError(f"quadratic surfaces are only discretized for N in {{2, 3}}, got N={N}")


def build_surface(spec: SurfaceSpec) -> SurfaceGrid:
    kind, N, n, K = spec.kind, spec.N, spec.resolution, spec.truncation_radius
    if kind is SurfaceKind.SPHERE:
        pts, w = unit_sphere_rule(N, n)
        return SurfaceGrid(spec, WeightedSpace(pts, w))
    if kind is SurfaceKind.SPHERE_QUADRATIC:
        # R = -|xi|^2 on {R = -1}; |grad R| = 2 on the unit sphere
        pts, w = unit_sphere_rule(N, n)
        return SurfaceGrid(spec, WeightedSpace(pts, w / 2), np.full(len(w), 2.0))

    inner = CONE_EXCISION * K if kind is SurfaceKind.CONE else 0.0
    base, bw = _base_rule(N, K, n, inner)
    r2 = np.sum(base**2, axis=1)
    if kind is SurfaceKind.PARABOLOID:
        height = r2[:, None]
        grad_r = np.sqrt(1 + 4 * r2)
        area = np.sqrt(1 + 4 * r2)
        sheets = (1,)
    elif kind is SurfaceKind.CONE:
        rho = np.sqrt(r2)
        height = rho[:, None]
        grad_r = 2 * np.sqrt(2) * rho
        area = np.full_like(rho, np.sqrt(2))
        sheets = (1, -1)
    elif kind is SurfaceKind.HYPERBOLOID:
        phi = np.sqrt(1 + r2)
        height = phi[:, None]
        full = np.sqrt(r2 + phi**2)
        grad_r = 2 * full
        area = full / phi
        sheets = (1, -1)
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unsupported surface kind {kind}")

    weight = bw * area / grad_r
    pts = np.concatenate([np.hstack([base, s * height]) for s in sheets])
    w = np.concatenate([weight] * len(sheets))
    g = np.concatenate([grad_r] * len(sheets))
    return SurfaceGrid(spec, WeightedSpace(pts, w), g)


def as_space(obj) -> WeightedSpace:
    if isinstance(obj, WeightedSpace):
        return obj
    space = getattr(obj, "space", None)
    if isinstance(space, WeightedSpace):
        return space
    raise TypeError(f"cannot interpret {type(obj).__name__} as a weighted space")


def extension_matrix(surface: SurfaceGrid, grid) -> WeightedOperator:
    """E f(x) = (2 pi)^{-N/2} int_S e^{i xi.x} f(xi) dmu(xi), sampled on ``grid``."""
    xs = as_space(grid)
    N = surface.N
    if xs.dim != N:
        raise ValueError(f"grid dimension {xs.dim} differs from surface dimension {N}")
    phase = xs.points @ surface.nodes.T
    return WeightedOperator((2 * np.pi) ** (-N / 2) * np.exp(1j * phase), surface.space, xs)


def ts_operator(surface: SurfaceGrid, grid) -> WeightedOperator:
    E = extension_matrix(surface, grid)
    return E.compose(E.adjoint())


def surface_measure_ft(surface: SurfaceGrid, k) -> complex:
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return complex(np.sum(np.exp(-1j * surface.nodes @ k) * surface.weights))


def _cap_mask(surface: SurfaceGrid, delta: float):
    if surface.spec.kind is not SurfaceKind.SPHERE:
        raise ValueError("Knapp caps are defined on the compact sphere")
    if not 0 < delta <= np.pi:
        raise ValueError("cap radius must lie in (0, pi]")
    if delta < surface.node_spacing():
        raise ValueError(
            f"cap radius {delta} is below the node spacing {surface.node_spacing():.3g}; "
            "increase the surface resolution"
        )
    cosang = np.clip(surface.nodes[:, -1], -1.0, 1.0)
    return np.arccos(cosang) <= delta * (1 + 1e-12)


def knapp_cap(surface: SurfaceGrid, delta: float) -> np.ndarray:
    """Normalized indicator of the cap of angular radius ``delta`` around e_N."""
    mask = _cap_mask(surface, delta)
    f = mask.astype(float)
    return f / surface.space.norm(f)


def knapp_extension_norm(surface: SurfaceGrid, delta: float, pprime: float,
                         cells: int = 64, extent: float = 6.0) -> float:
    """||E f_delta||_{L^p'} on the anisotropic box matched to the cap.

    The box has half-widths extent/delta in the tangential directions and
    extent/delta^2 along the pole, which is where E f_delta lives.
    """
    f = knapp_cap(surface, delta)
    keep = f != 0
    sub = surface.space.subspace(keep)
    N = surface.N
    half = np.array([extent / delta] * (N - 1) + [extent / delta**2])
    axes = [(-1 + (np.arange(cells) + 0.5) * 2 / cells) * a for a in half]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vol = np.prod(2 * half / cells)
    # chunk over points; the tube box can hold many cells in N = 3
    total = 0.0
    for start in range(0, len(pts), 65536):
        blk = pts[start:start + 65536]
        ef = (2 * np.pi) ** (-N / 2) * np.exp(1j * blk @ sub.points.T) @ (sub.weights * f[keep])
        total += np.sum(np.abs(ef) ** pprime) * vol
    return float(total ** (1 / pprime))
