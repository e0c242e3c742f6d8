import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schattenlab.specmat import (
    DensityMatrix,
    RankDeficiencyError,
    WeightedOperator,
    WeightedSpace,
    density_of,
    orthonormalize,
    regularized_det,
    schatten_norm,
    singular_values,
    unitarize,
)

from conftest import crandn


def unit_space(n, dim=1):
    return WeightedSpace(np.arange(n, dtype=float)[:, None].repeat(dim, 1), np.ones(n))


def random_space(rng, n):
    return WeightedSpace(rng.normal(size=(n, 2)), rng.uniform(0.2, 2.0, n))


def random_op(rng, m, n):
    return WeightedOperator(crandn(rng, m, n), random_space(rng, n), random_space(rng, m))


class TestWeightedSpace:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            WeightedSpace(np.zeros((2, 1)), [1.0, 0.0])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="points"):
            WeightedSpace(np.zeros((3, 1)), [1.0, 1.0])

    def test_norms(self):
        sp = WeightedSpace(np.zeros((2, 1)), [2.0, 0.5])
        assert sp.norm([1.0, 2.0], 2) == pytest.approx(np.sqrt(2 + 2))
        assert sp.norm([1.0, -3.0], np.inf) == 3.0

    def test_split_node_keeps_measure(self, rng):
        sp = random_space(rng, 6)
        sp2 = sp.split_node(2)
        assert sp2.size == 7
        assert sp2.weights.sum() == pytest.approx(sp.weights.sum(), rel=1e-15)


class TestUnitarize:
    def test_identity_unit_weights(self):
        sp = unit_space(4)
        assert np.array_equal(unitarize(WeightedOperator(np.eye(4), sp, sp)), np.eye(4))

    def test_scalar_case(self):
        d = WeightedSpace([[0.0]], [4.0])
        c = WeightedSpace([[0.0]], [9.0])
        assert unitarize(WeightedOperator([[2.0]], d, c))[0, 0] == pytest.approx(12.0)

    def test_node_splitting_preserves_spectrum(self, rng):
        op = random_op(rng, 5, 5)
        split = op.domain.split_node(1)
        K = np.insert(op.matrix, 1, op.matrix[:, 1], axis=1)
        op2 = WeightedOperator(K, split, op.codomain)
        s1 = singular_values(op).values
        s2 = singular_values(op2).values[:5]
        assert np.allclose(s1, s2, rtol=1e-12, atol=1e-12 * s1[0])


class TestOperatorAlgebra:
    def test_adjoint_contract(self, rng):
        op = random_op(rng, 6, 4)
        f, g = crandn(rng, 4), crandn(rng, 6)
        lhs = op.codomain.inner(g, op.apply(f))
        rhs = op.domain.inner(op.adjoint().apply(g), f)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)

    def test_compose_matches_sequential_apply(self, rng):
        a = random_op(rng, 4, 5)
        b = WeightedOperator(crandn(rng, 5, 3), random_space(rng, 3), a.domain)
        f = crandn(rng, 3)
        assert np.allclose((a @ b).apply(f), a.apply(b.apply(f)))

    def test_from_action_roundtrip(self, rng):
        sp = random_space(rng, 4)
        P = crandn(rng, 4, 4)
        op = WeightedOperator.from_action(P, sp, sp)
        f = crandn(rng, 4)
        assert np.allclose(op.apply(f), P @ f)

    def test_identity_acts_as_identity(self, rng):
        sp = random_space(rng, 5)
        f = crandn(rng, 5)
        assert np.allclose(WeightedOperator.identity(sp).apply(f), f)
        assert np.allclose(unitarize(WeightedOperator.identity(sp)), np.eye(5))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            WeightedOperator(np.zeros((2, 3)), unit_space(2), unit_space(2))


class TestSchatten:
    def test_nilpotent_shift(self):
        sp = unit_space(2)
        assert np.allclose(singular_values(WeightedOperator([[0, 1], [0, 0]], sp, sp)).values, [1, 0])

    def test_diagonal(self):
        sp = unit_space(2)
        op = WeightedOperator(np.diag([3.0, 4.0]), sp, sp)
        assert np.allclose(singular_values(op).values, [4, 3])
        assert schatten_norm(op, 1) == pytest.approx(7)
        assert schatten_norm(op, 2) == pytest.approx(5)
        assert schatten_norm(op, np.inf) == pytest.approx(4)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.5, np.inf])
    def test_rank_one_projector(self, rng, alpha):
        u = crandn(rng, 7)
        u /= np.linalg.norm(u)
        assert schatten_norm(np.outer(u, u.conj()), alpha) == pytest.approx(1.0, rel=1e-12)

    def test_eigen_oracle_40(self, rng):
        M = crandn(rng, 40, 40)
        ev = np.linalg.eigvalsh(M.conj().T @ M)
        oracle = np.sqrt(np.sort(np.clip(ev, 0, None))[::-1])
        assert np.allclose(singular_values(M if False else WeightedOperator(M, unit_space(40), unit_space(40))).values,
                           oracle, rtol=1e-10)

    def test_trace_route_for_large_alpha4(self, rng):
        M = crandn(rng, 620, 610)
        s = np.linalg.svd(M, compute_uv=False)
        assert schatten_norm(M, 4) == pytest.approx(np.sum(s**4) ** 0.25, rel=1e-10)

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            schatten_norm(np.eye(2), 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1.0, 6.0), st.floats(1.0, 6.0))
    def test_holder(self, seed, p, q):
        rng = np.random.default_rng(seed)
        A, B = crandn(rng, 6, 5), crandn(rng, 5, 7)
        r = 1 / (1 / p + 1 / q)
        lhs = schatten_norm(A @ B, r)
        rhs = schatten_norm(A, p) * schatten_norm(B, q)
        assert lhs <= rhs * (1 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1.0, 5.0), st.floats(0.1, 3.0))
    def test_monotone_in_alpha_and_triangle(self, seed, a, da):
        rng = np.random.default_rng(seed)
        A, B = crandn(rng, 5, 5), crandn(rng, 5, 5)
        assert schatten_norm(A, a + da) <= schatten_norm(A, a) * (1 + 1e-12)
        assert schatten_norm(A, np.inf) <= schatten_norm(A, a) * (1 + 1e-12)
        assert schatten_norm(A + B, a) <= (schatten_norm(A, a) + schatten_norm(B, a)) * (1 + 1e-12)


class TestRegularizedDet:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_zero_operator(self, n):
        assert regularized_det(np.zeros((3, 3)), n) == pytest.approx(1.0)

    def test_closed_form_n2(self):
        assert regularized_det(np.array([[1.0]]), 2) == pytest.approx(2 * np.exp(-1), rel=1e-14)
        assert abs(regularized_det(np.array([[1.0]]), 2) - 0.735759) < 1e-6

    @pytest.mark.parametrize("n", [1, 2, 4])
    @pytest.mark.parametrize("method", ["eig", "lu"])
    def test_minus_one_eigenvalue(self, n, method):
        assert abs(regularized_det(np.diag([-1.0, 0.3]), n, method=method)) < 1e-14

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_lu_route_agrees(self, rng, n):
        A = 0.3 * crandn(rng, 8, 8)
        assert regularized_det(A, n, "lu") == pytest.approx(regularized_det(A, n, "eig"), rel=1e-10)

    def test_bound_by_schatten_norm(self, rng):
        # log|Det_2(1+A)| <= C ||A||_2^2 with C = 1/2 for any matrix
        for _ in range(50):
            A = crandn(rng, 6, 6) * rng.uniform(0.05, 2)
            assert np.log(abs(regularized_det(A, 2))) <= 0.5 * schatten_norm(A, 2) ** 2 + 1e-12


class TestDensity:
    def test_identity_rank_one(self, rng):
        sp = random_space(rng, 6)
        u = crandn(rng, 6)
        gamma = DensityMatrix.from_system(u, [1.0], sp)
        rho = density_of(WeightedOperator.identity(sp), gamma)
        assert np.allclose(rho, np.abs(u) ** 2, rtol=1e-12)

    def test_duality_identity(self, rng):
        for _ in range(50):
            dom, cod = random_space(rng, 5), random_space(rng, 7)
            A = WeightedOperator(crandn(rng, 7, 5), dom, cod)
            f = orthonormalize(crandn(rng, 5, 3), dom)
            gamma = DensityMatrix.from_system(f, rng.uniform(-1, 1, 3), dom)
            V = rng.normal(size=7)
            rho = density_of(A, gamma)
            lhs = cod.integrate(rho * V)
            inner = A.adjoint() @ WeightedOperator.multiplication(V, cod) @ A
            rhs = np.trace(unitarize(gamma.operator) @ unitarize(inner))
            assert abs(lhs - rhs) < 1e-10 * max(1, abs(rhs))

    def test_orthonormal_sum_formula(self, rng):
        dom, cod = random_space(rng, 6), random_space(rng, 4)
        A = WeightedOperator(crandn(rng, 4, 6), dom, cod)
        f = orthonormalize(crandn(rng, 6, 3), dom)
        nu = np.array([0.7, 0.2, 0.1])
        rho = density_of(A, DensityMatrix.from_system(f, nu, dom))
        direct = sum(n * np.abs(A.apply(f[:, j])) ** 2 for j, n in enumerate(nu))
        assert np.allclose(rho, direct, rtol=1e-12)

    def test_normalization_against_trace(self, rng):
        dom, cod = random_space(rng, 6), random_space(rng, 9)
        A = WeightedOperator(crandn(rng, 9, 6), dom, cod)
        gamma = DensityMatrix.from_system(orthonormalize(crandn(rng, 6, 2), dom), [1.0, 0.5], dom)
        AgA = A @ gamma.operator @ A.adjoint()
        assert cod.integrate(density_of(A, gamma)) == pytest.approx(np.trace(unitarize(AgA)), rel=1e-12)

    def test_dimension_mismatch(self, rng):
        A = random_op(rng, 3, 4)
        g = DensityMatrix.from_system(crandn(rng, 5), [1.0], random_space(rng, 5))
        with pytest.raises(ValueError, match="domain"):
            density_of(A, g)

    def test_non_hermitian_flag_checked(self, rng):
        sp = random_space(rng, 3)
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(WeightedOperator(crandn(rng, 3, 3), sp, sp))


class TestOrthonormalize:
    def gram(self, Q, sp):
        return (Q.conj().T * sp.weights) @ Q

    def test_single_column(self, rng):
        sp = random_space(rng, 8)
        u = crandn(rng, 8)
        q = orthonormalize(u, sp)[:, 0]
        assert np.allclose(q, u / sp.norm(u))

    def test_orthonormal_input_unchanged(self, rng):
        sp = random_space(rng, 8)
        Q = orthonormalize(crandn(rng, 8, 3), sp)
        Q2 = orthonormalize(Q, sp)
        assert np.abs(self.gram(Q2, sp) - np.eye(3)).max() < 1e-13
        assert np.allclose(Q2, Q, atol=1e-12)

    def test_gaussians_on_grid(self, rng):
        x = np.linspace(-10, 10, 256)
        sp = WeightedSpace(x[:, None], np.full(256, x[1] - x[0]))
        cols = np.stack([np.exp(-((x - c) ** 2)) for c in rng.uniform(-6, 6, 16)], 1)
        Q = orthonormalize(cols, sp)
        assert np.abs(self.gram(Q, sp) - np.eye(16)).max() < 1e-12

    def test_rank_deficient(self, rng):
        sp = random_space(rng, 6)
        u = crandn(rng, 6)
        with pytest.raises(RankDeficiencyError):
            orthonormalize(np.stack([u, 2 * u], 1), sp)
