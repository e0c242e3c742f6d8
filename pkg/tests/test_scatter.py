import numpy as np
import pytest

from schattenlab.grids import SpatialGrid
from schattenlab.resolvent import PotentialField
from schattenlab.scatter import (
    born_term,
    continuity_sweep,
    gamma0,
    smatrix,
    smatrix_1d,
    smatrix_alpha,
    sphere_for,
    square_well_transmission,
)
from schattenlab.specmat import schatten_norm
from schattenlab.surface import SurfaceSpec, build_surface


def well_1d(depth=5.0, width=1.0, h=0.01):
    g = SpatialGrid.from_spacing(h, 2.0, 1)
    x = g.points[:, 0]
    return PotentialField(np.where((x > 0) & (x < width), -depth, 0.0), g)


def bump3(h, R=1.5, c=-1.0):
    g = SpatialGrid.from_spacing(h, R, 3, radius=R)
    r2 = (g.points**2).sum(1) / R**2
    v = np.zeros(len(r2))
    m = r2 < 1
    v[m] = c * np.exp(1 - 1 / (1 - r2[m]))
    return PotentialField(v, g)


class TestOneDimensional:
    def test_free(self):
        g = SpatialGrid(2.0, 40, 1)
        S = smatrix_1d(PotentialField(np.zeros(40), g), 3.0)
        assert np.allclose(S, np.eye(2), atol=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 2.0, 9.0])
    def test_square_well(self, lam):
        S = smatrix_1d(well_1d(), lam)
        assert abs(S[0, 0] - square_well_transmission(lam, 5.0, 1.0)) < 1e-10
        assert abs(S[0, 0] - S[1, 1]) < 1e-10
        for col in (0, 1):
            assert abs(np.sum(np.abs(S[:, col]) ** 2) - 1) < 1e-10
        assert np.allclose(S.conj().T @ S, np.eye(2), atol=1e-10)

    def test_absorbing_potential_loses_flux(self):
        V = well_1d()
        # Im V < 0 absorbs under exp(-itH)
        V = PotentialField(V.samples * (1 + 0.3j), V.grid)
        S = smatrix_1d(V, 2.0)
        assert abs(S[0, 0]) ** 2 + abs(S[1, 0]) ** 2 < 1

    def test_errors(self):
        with pytest.raises(ValueError):
            smatrix_1d(well_1d(), 0.0)
        with pytest.raises(TypeError):
            smatrix_1d(bump3(0.5), 1.0)


class TestBoundaryTrace:
    def test_prefactor_and_adjoint(self, rng):
        S = build_surface(SurfaceSpec("sphere", 3, 8))
        g = SpatialGrid(1.0, 4, 3)
        G = gamma0(4.0, S, g.space)
        pref = 2**-0.5 * 4.0**0.25 * (2 * np.pi) ** -1.5
        assert np.abs(G.matrix).max() == pytest.approx(pref)
        f = rng.normal(size=g.size) + 0j
        u = rng.normal(size=S.size) + 0j
        lhs = S.space.inner(u, G.apply(f))
        rhs = g.space.inner(G.adjoint().apply(u), f)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_dimension_check(self):
        S = build_surface(SurfaceSpec("sphere", 2, 16))
        with pytest.raises(ValueError):
            gamma0(-1.0, S, SpatialGrid(1.0, 4, 2).space)


class TestAlpha:
    def test_values(self):
        assert smatrix_alpha(3, 2.0) == 4.0
        assert smatrix_alpha(3, 1.5) == 2.0
        assert smatrix_alpha(2, 1.2) == 2.0
        with pytest.raises(ValueError):
            smatrix_alpha(3, 2.5)
        with pytest.raises(ValueError):
            smatrix_alpha(1, 1.0)


class TestThreeDimensional:
    def test_free_is_identity(self):
        V = PotentialField(np.zeros(bump3(0.5).space.size), bump3(0.5).grid)
        res = smatrix(V, 1.0, 2.0)
        assert np.allclose(res.S, np.eye(res.S.shape[0]))
        assert res.deficit == 0.0

    def test_unitary_for_real_potential(self):
        res = smatrix(bump3(0.4, c=-2.0), 1.0, 2.0)
        assert res.unitarity < 5e-3
        assert res.bs_norm > 0

    def test_born_approximation(self):
        # S - 1 = Born term + O(coupling^2)
        V = bump3(0.4)
        sphere = sphere_for(V, 1.0)
        errs = []
        for eps in (0.02, 0.01):
            Ve = V.scaled(eps)
            res = smatrix(Ve, 1.0, 2.0, sphere)
            B = born_term(Ve, 1.0, sphere)
            errs.append(schatten_norm(res.S - np.eye(len(B)) - B, 4.0))
        assert errs[1] / errs[0] == pytest.approx(0.25, rel=0.05)

    def test_born_term_skew_for_real_potential(self):
        V = bump3(0.5)
        sphere = sphere_for(V, 2.0)
        B = born_term(V, 2.0, sphere)
        assert np.allclose(B, -B.conj().T, atol=1e-12)

    def test_sweep_requires_increasing(self):
        with pytest.raises(ValueError, match="increasing"):
            continuity_sweep(bump3(0.5), [2.0, 1.0, 3.0], 2.0)

    def test_sweep(self):
        # smooth in lambda: differences scale linearly with the step
        rep = continuity_sweep(bump3(0.5), [1.0, 1.1, 1.3, 1.7, 2.5], 2.0)
        assert rep.alpha == 4.0
        assert len(rep.differences) == 4
        assert 0.8 <= rep.fit().slope <= 1.2

    def test_sphere_resolution_grows_with_energy(self):
        V = bump3(0.5)
        assert sphere_for(V, 16.0).space.size > sphere_for(V, 1.0).space.size
