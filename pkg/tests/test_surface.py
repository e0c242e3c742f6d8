import numpy as np
import pytest
from scipy.special import j0

from schattenlab.fitting import slope_fit
from schattenlab.grids import SpatialGrid, TimeGrid, TorusGrid, RadialGrid, sphere_area
from schattenlab.specmat import WeightedSpace, unitarize
from schattenlab.surface import (
    SurfaceSpec,
    build_surface,
    extension_matrix,
    knapp_cap,
    knapp_extension_norm,
    surface_measure_ft,
    ts_operator,
)


def circle(n):
    return build_surface(SurfaceSpec("sphere", 2, n))


class TestGrids:
    def test_spatial_grid_cell_volume(self):
        g = SpatialGrid(2.0, 8, 2)
        assert g.cell_volume == pytest.approx(0.25)
        assert g.size == 64
        assert g.space.weights.sum() == pytest.approx(16.0)

    def test_masked_grid(self):
        g = SpatialGrid.from_spacing(0.1, 1.0, 2, radius=1.0)
        assert np.all(np.linalg.norm(g.points, axis=1) <= 1.0)
        assert g.space.weights.sum() == pytest.approx(np.pi, rel=0.02)

    def test_torus_frequencies(self):
        g = TorusGrid(2 * np.pi, 8)
        assert np.allclose(np.sort(g.freq_axis), np.arange(-4, 4))
        with pytest.raises(ValueError):
            TorusGrid(1.0, 7)

    def test_time_grid_refinement(self):
        tg = TimeGrid(1.0, 5)
        assert tg.refined().m == 9
        assert tg.weights.sum() == pytest.approx(1.0)

    def test_radial_grid_measure(self):
        rg = RadialGrid(3.0, 0.01, N=2)
        assert rg.space.weights.sum() == pytest.approx(np.pi * 9, rel=1e-4)

    def test_sphere_area(self):
        assert sphere_area(2) == pytest.approx(2 * np.pi)
        assert sphere_area(3) == pytest.approx(4 * np.pi)


class TestBuildSurface:
    def test_circle_length(self):
        assert circle(256).weights.sum() == pytest.approx(2 * np.pi, abs=1e-12)

    def test_sphere_area(self):
        S = build_surface(SurfaceSpec("sphere", 3, 36))
        assert 2500 <= S.size <= 2700
        assert S.weights.sum() == pytest.approx(4 * np.pi, abs=1e-8)

    def test_nodes_on_sphere(self):
        S = build_surface(SurfaceSpec("sphere", 3, 12))
        assert np.allclose(np.linalg.norm(S.nodes, axis=1), 1.0)

    def test_paraboloid_measure_is_base_measure(self):
        S = build_surface(SurfaceSpec("paraboloid", 2, 64, truncation_radius=2.0))
        assert S.weights.sum() == pytest.approx(4.0, abs=1e-12)
        assert np.allclose(S.nodes[:, 1], S.nodes[:, 0] ** 2)

    def test_cone_measure(self):
        # two sheets, weight sqrt(2)/(2 sqrt(2)|xi'|) = 1/(2|xi'|) on [eps, K]
        S = build_surface(SurfaceSpec("cone", 2, 4000, truncation_radius=1.0))
        assert S.weights.sum() == pytest.approx(2 * np.log(20.0), rel=1e-4)

    def test_hyperboloid_measure(self):
        S = build_surface(SurfaceSpec("hyperboloid", 2, 4000, truncation_radius=2.0))
        assert S.weights.sum() == pytest.approx(2 * np.arcsinh(2.0), rel=1e-4)
        xi = S.nodes
        assert np.allclose(xi[:, 1] ** 2 - xi[:, 0] ** 2, 1.0)

    def test_sphere_quadratic_weight(self):
        S = build_surface(SurfaceSpec("sphere_quadratic", 2, 64))
        assert S.weights.sum() == pytest.approx(np.pi)
        assert np.allclose(S.normal_gradient, 2.0)

    def test_rejects_small_resolution(self):
        with pytest.raises(ValueError):
            SurfaceSpec("sphere", 2, 4)

    def test_total_measure_convergence(self):
        # Gauss rules integrate the paraboloid disc exactly already at low order
        for n in (16, 32, 64):
            assert build_surface(SurfaceSpec("paraboloid", 3, n)).weights.sum() == pytest.approx(np.pi, abs=1e-12)


class TestExtension:
    def test_constant_at_origin(self):
        S = circle(128)
        g = WeightedSpace(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, -1.0]]), np.ones(3))
        ef = extension_matrix(S, g).apply(np.ones(S.size))
        assert ef[0] == pytest.approx(1.0)
        assert ef[1] == pytest.approx(j0(1.0), abs=1e-12)
        assert ef[2] == pytest.approx(0.765198, abs=1e-6)

    def test_adjoint_contract(self, rng):
        S = circle(64)
        g = SpatialGrid(3.0, 12, 2)
        E = extension_matrix(S, g)
        f = rng.normal(size=S.size) + 1j * rng.normal(size=S.size)
        h = rng.normal(size=g.size) + 1j * rng.normal(size=g.size)
        lhs = g.space.inner(h, E.apply(f))
        rhs = S.space.inner(E.adjoint().apply(h), f)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)

    def test_ts_is_psd_and_translation_invariant(self):
        S = circle(64)
        g = SpatialGrid(2.0, 8, 2)
        T = ts_operator(S, g)
        U = unitarize(T)
        assert np.abs(U - U.conj().T).max() < 1e-12 * np.abs(U).max()
        ev = np.linalg.eigvalsh(U)
        assert ev.min() >= -1e-12 * ev.max()
        assert T.matrix[0, 0] == pytest.approx(1 / (2 * np.pi))
        # kernel depends on x - x' only
        x = g.points
        diff = x[:, None, :] - x[None, :, :]
        i, j = 5, 17
        same = np.all(np.abs(diff - diff[j, i]) < 1e-12, axis=2)
        same[j, i] = False
        assert same.any()
        for a, b in zip(*np.nonzero(same)):
            assert T.matrix[a, b] == pytest.approx(T.matrix[j, i], abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            extension_matrix(circle(16), SpatialGrid(1.0, 4, 3))


class TestMeasureFT:
    def test_circle_values(self):
        S = circle(256)
        assert surface_measure_ft(S, [0, 0]) == pytest.approx(2 * np.pi)
        # the closed form 2 pi J0(5) is -1.115873...
        assert surface_measure_ft(S, [5, 0]) == pytest.approx(2 * np.pi * j0(5.0), abs=1e-12)

    def test_sphere_sinc(self):
        S = build_surface(SurfaceSpec("sphere", 3, 40))
        assert abs(surface_measure_ft(S, [0, 0, np.pi])) < 1e-10
        assert surface_measure_ft(S, [1.0, 2.0, 0.5]) == pytest.approx(
            4 * np.pi * np.sinc(np.sqrt(5.25) / np.pi), abs=1e-10)

    def test_circle_decay(self):
        S = circle(2048)
        # |sigma_hat(k)| sqrt(k) tends to sqrt(8 pi): the envelope does not drift
        def envelope(lo, hi):
            return max(abs(surface_measure_ft(S, [k, 0])) * k ** 0.5 for k in np.linspace(lo, hi, 200))
        a, b = envelope(20, 50), envelope(50, 100)
        assert abs(a / b - 1) < 0.1
        assert a == pytest.approx(np.sqrt(8 * np.pi), rel=0.05)


class TestKnapp:
    def test_full_circle_is_constant(self):
        f = knapp_cap(circle(64), np.pi)
        assert np.allclose(f, (2 * np.pi) ** -0.5)

    @pytest.mark.parametrize("delta", [0.1, 0.2, 0.4])
    def test_normalized(self, delta):
        S = circle(2048)
        assert S.space.norm(knapp_cap(S, delta)) == pytest.approx(1.0, abs=1e-12)

    def test_under_resolved(self):
        with pytest.raises(ValueError, match="node spacing"):
            knapp_cap(circle(16), 0.1)

    def test_only_sphere(self):
        with pytest.raises(ValueError):
            knapp_cap(build_surface(SurfaceSpec("paraboloid", 2, 16)), 0.5)

    def test_extension_norm_exponent(self):
        # expected growth exponent (N-1)/2 - (N+1)/p' for p' = 4, N = 2
        S = circle(8192)
        ds = [0.4, 0.2, 0.1, 0.05]
        vals = [knapp_extension_norm(S, d, 4.0) for d in ds]
        expected = 0.5 - 3 / 4
        assert slope_fit(ds, vals).slope == pytest.approx(expected, rel=0.15)
