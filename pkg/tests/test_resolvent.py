import numpy as np
import pytest
from scipy.special import k0

from schattenlab.grids import SpatialGrid, TorusGrid
from schattenlab.resolvent import (
    NearSingularError,
    PotentialField,
    SpectralParameter,
    birman_schwinger,
    diagonal_value,
    free_resolvent,
    kss_multiplier_check,
    lap_boundary,
    perturbed_sandwich,
    resolvent_jump_vs_extension,
    resolvent_kernel,
    sandwich_resolvent,
    schatten_index,
    sobolev_exponents,
    uniform_sobolev_sweep,
    young_orthonormal_check,
)
from schattenlab.specmat import WeightedOperator, WeightedSpace, orthonormalize
from schattenlab.surface import SurfaceSpec, build_surface

from conftest import crandn


class TestSpectralParameter:
    def test_branch(self):
        p = SpectralParameter.from_z(-4)
        assert p.sqrt_z == pytest.approx(2j)
        assert SpectralParameter.from_z(1 - 1j).sqrt_z.imag > 0
        assert p.z == pytest.approx(-4)

    def test_boundary(self):
        up, down = SpectralParameter.boundary(4.0, 1), SpectralParameter.boundary(4.0, -1)
        assert up.sqrt_z == 2 and down.sqrt_z == -2
        assert up.on_boundary and not SpectralParameter.from_z(1j).on_boundary

    def test_rejects_half_line(self):
        with pytest.raises(ValueError, match="boundary"):
            SpectralParameter.from_z(2.0)
        with pytest.raises(ValueError):
            SpectralParameter.boundary(-1.0)
        with pytest.raises(ValueError):
            SpectralParameter(complex(1, -1))


class TestKernels:
    def test_known_values(self):
        r = np.array([0.5, 1.0, 2.0])
        assert np.allclose(resolvent_kernel(1, -1, r), np.exp(-r) / 2)
        assert resolvent_kernel(3, -1, 1.0) == pytest.approx(0.0292749, abs=1e-7)
        assert np.allclose(resolvent_kernel(2, -1, r), k0(r) / (2 * np.pi))

    @pytest.mark.parametrize("N", [1, 2, 3])
    def test_schwarz_reflection(self, N):
        r = np.linspace(0.3, 3, 7)
        z = 1.5 + 0.8j
        assert np.allclose(resolvent_kernel(N, np.conj(z), r), np.conj(resolvent_kernel(N, z, r)))

    def test_singular_diagonal(self):
        with pytest.raises(ValueError, match="singular"):
            resolvent_kernel(3, -1, np.array([0.0, 1.0]))
        with pytest.raises(ValueError):
            resolvent_kernel(4, -1, 1.0)

    @pytest.mark.parametrize("N,threshold", [(2, 1e-6), (3, 1e-4)])
    def test_diagonal_series_branch_continuous(self, N, threshold):
        # the series branch takes over below |sqrt(z)| a = threshold
        h = 0.1
        a = h / np.sqrt(np.pi) if N == 2 else h * (3 / (4 * np.pi)) ** (1 / 3)
        s_lo, s_hi = 0.999 * threshold / a, 1.001 * threshold / a
        lo = diagonal_value(N, SpectralParameter(1j * s_lo), h)
        hi = diagonal_value(N, SpectralParameter(1j * s_hi), h)
        assert abs(lo - hi) < 1e-3 * abs(lo)

    def test_nystrom_solves_helmholtz_1d(self):
        # independent route: Fourier solve on a large periodic box
        g = SpatialGrid.from_spacing(0.02, 10.0, 1)
        x = g.points[:, 0]
        f = np.exp(-(x**2)) * (1 + x)
        z = -1 + 0.5j
        u = free_resolvent(1, z, g).apply(f)
        k = 2 * np.pi * np.fft.fftfreq(len(x), d=g.spacing)
        ref = np.fft.ifft(np.fft.fft(f) / (k**2 - z))
        mid = np.abs(x) < 4
        assert np.max(np.abs(u - ref)[mid]) < 1e-4 * np.max(np.abs(ref))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            free_resolvent(3, -1, SpatialGrid(1.0, 4, 2))


class TestExponents:
    def test_values(self):
        assert sobolev_exponents(3, 2.0) == pytest.approx((4.0, -0.25))
        assert sobolev_exponents(1, 1) == (2.0, -0.5)
        a, p = sobolev_exponents(2, 1.2)
        assert a == pytest.approx(1.5) and p == pytest.approx(-1 + 1 / 1.2)

    @pytest.mark.parametrize("N,q", [(3, 2.5), (3, 1.2), (2, 1.6), (1, 2), (4, 2)])
    def test_out_of_range(self, N, q):
        with pytest.raises(ValueError):
            sobolev_exponents(N, q)

    def test_schatten_index(self):
        assert schatten_index(1, 1) == 2.0
        assert schatten_index(3, 2.0) == 4.0
        assert schatten_index(3, 1.5) == 2.0
        with pytest.raises(ValueError):
            schatten_index(3, 3.0)


class TestOneDimensionalBound:
    def test_bound_and_scaling(self, rng):
        g = SpatialGrid.from_spacing(0.05, 6.0, 1)
        x = g.points[:, 0]
        w1 = np.exp(-(x**2)) * crandn(rng, len(x)) * 0.3
        w2 = np.exp(-((x - 1) ** 2))
        bound = g.space.norm(w1) * g.space.norm(w2) / 2
        for z in [0.5 * np.exp(1j * t) for t in (0.1, 1.0, 3.0, 5.0)] + [9 + 0.01j, -3 + 0j]:
            assert sandwich_resolvent(w1, w2, z, g, 2.0) <= bound * abs(z) ** -0.5
        # on the boundary |G| is constant off the diagonal, so the scaling is
        # exact up to the O(h) diagonal correction
        a = sandwich_resolvent(w1, w2, SpectralParameter.boundary(1.0), g, 2.0, N=1)
        b = sandwich_resolvent(w1, w2, SpectralParameter.boundary(4.0), g, 2.0, N=1)
        assert a / b == pytest.approx(2.0, rel=1e-5)


class TestSobolevSweep:
    def test_small_sweep(self):
        g = SpatialGrid.from_spacing(0.5, 1.5, 3, radius=1.5)

        def W(x):
            return np.exp(-(x**2).sum(-1))

        zs = [np.exp(1j * np.pi / 2), 2 * np.exp(1j * np.pi)]
        rep = uniform_sobolev_sweep(3, 2.0, zs, W, W, [g])
        assert rep.alpha == 4.0
        assert len(rep.rows) == 2
        assert rep.spread() >= 1.0
        assert rep.passed

    def test_exploratory_range_has_no_verdict(self):
        g = SpatialGrid(2.0, 6, 2)

        def W(x):
            return np.exp(-(x**2).sum(-1))

        rep = uniform_sobolev_sweep(2, 1.2, [1j], W, W, g)
        assert rep.passed is None


class TestKSS:
    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_multiplier_bound(self, rng, p):
        g = TorusGrid(2 * np.pi, 32, 1)
        W = crandn(rng, 32)
        ghat = np.exp(-0.1 * g.k2) * (1 + 0.5j)
        rep = kss_multiplier_check(W, ghat, p, g)
        assert 0 < rep.ratio <= 1 + 1e-12

    def test_young_orthonormal(self, rng):
        g = TorusGrid(2 * np.pi, 64, 1)
        f = orthonormalize(crandn(rng, 64, 5), g.space).T
        mult = np.exp(-0.05 * g.k2)
        rep = young_orthonormal_check(mult, f, rng.uniform(0, 1, 5), 1.5, g)
        assert rep.lhs <= rep.rhs

    def test_p_range(self, rng):
        g = TorusGrid(2 * np.pi, 8, 1)
        with pytest.raises(ValueError):
            kss_multiplier_check(np.ones(8), np.ones(8), 2.5, g)


class TestBirmanSchwinger:
    def test_zero_potential(self):
        g = SpatialGrid(2.0, 8, 1)
        A, n = birman_schwinger(PotentialField(np.zeros(8), g), -1)
        assert A.shape == (0, 0) and n == 0.0

    def test_factorization(self, rng):
        g = SpatialGrid.from_spacing(0.1, 2.0, 1)
        x = g.points[:, 0]
        V = PotentialField(np.where(np.abs(x) < 1, -2 + 1j * x, 0), g)
        A, _ = birman_schwinger(V, -1 + 1j)
        supp = V.support
        R = free_resolvent(1, -1 + 1j, g).matrix[np.ix_(supp, supp)]
        expected = V.sqrt_v[supp][:, None] * R * V.sqrt_abs[supp][None, :]
        assert np.allclose(A.matrix, expected)
        assert np.allclose(V.sqrt_v * V.sqrt_abs, V.samples)

    def test_near_singular(self):
        sp = WeightedSpace(np.zeros((3, 1)), np.ones(3))
        with pytest.raises(NearSingularError):
            perturbed_sandwich(WeightedOperator(-np.eye(3), sp, sp))

    def test_lap_1d(self):
        g = SpatialGrid.from_spacing(0.05, 2.0, 1)
        x = g.points[:, 0]
        V = PotentialField(np.exp(-(x**2)) * (np.abs(x) < 2), g)
        rep = lap_boundary(V, 1.0, 1, [0.1, 0.05, 0.025, 0.0125])
        assert rep.monotone
        assert rep.extrapolation_error < rep.raw_error
        assert rep.neumann_residual is not None

    def test_lap_needs_geometric(self):
        g = SpatialGrid(1.0, 8, 1)
        V = PotentialField(np.ones(8), g)
        with pytest.raises(ValueError, match="geometric"):
            lap_boundary(V, 1.0, 1, [0.1, 0.05, 0.01])


def test_jump_approaches_extension():
    S = build_surface(SurfaceSpec("sphere_quadratic", 2, 128))
    g = SpatialGrid.from_spacing(0.2, 1.6, 2, radius=1.6)
    x = g.points
    w = np.exp(-(x**2).sum(-1))
    rep = resolvent_jump_vs_extension(g, S, [0.2, 0.1, 0.05], w, w)
    assert rep.monotone
    assert rep.distances[-1] < 0.1
