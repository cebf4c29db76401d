import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphdeconv.errors import DimensionMismatch, GenerationFailed, NotDiagonalizable
from graphdeconv.graph import (
    Dictionary,
    GraphFilter,
    adjacency,
    apply_filter,
    eigendecompose,
    filter_matrix,
    generate_graph,
    generate_problem_instance,
    lifted_operator_p,
    lifted_operator_t,
    shift_from_matrix,
    shifted_inputs,
    vandermonde,
    vec,
)


def er_shift(n, p, seed):
    return generate_graph("er", n, seed, p=p)


def directed_cycle(n):
    s = np.zeros((n, n))
    s[(np.arange(n) + 1) % n, np.arange(n)] = 1.0  # node i feeds node i+1
    return shift_from_matrix(s, decompose=False)


class TestEigendecompose:
    def test_identity(self):
        sh = eigendecompose(np.eye(3))
        np.testing.assert_allclose(sh.lam, [1, 1, 1])
        np.testing.assert_allclose(np.abs(sh.v), np.eye(3)[:, np.argmax(np.abs(sh.v), axis=0)])

    def test_two_node_path(self):
        sh = eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(sh.lam, [1, -1])
        r = 1 / np.sqrt(2)
        np.testing.assert_allclose(np.abs(sh.v), [[r, r], [r, r]])
        assert sh.v[0, 0] * sh.v[1, 0] > 0 and sh.v[0, 1] * sh.v[1, 1] < 0

    def test_er_residual(self):
        g = nx.gnp_random_graph(20, 0.3, seed=7)
        s = adjacency(g, 20)
        sh = eigendecompose(s)
        resid = np.linalg.norm(s - sh.v @ np.diag(sh.lam) @ sh.u) / np.linalg.norm(s)
        assert resid <= 1e-10
        assert np.all(np.diff(sh.lam) <= 0)
        assert sh.symmetric
        np.testing.assert_allclose(sh.u, sh.v.T, atol=1e-10)

    def test_directed_real_spectrum(self):
        s = np.array([[1.0, 0.0], [1.0, 2.0]])
        sh = eigendecompose(s)
        assert not sh.symmetric
        np.testing.assert_allclose(sh.lam, [2, 1])
        np.testing.assert_allclose(sh.v @ np.diag(sh.lam) @ sh.u, s, atol=1e-12)

    @pytest.mark.parametrize(
        "s",
        [
            np.array([[0.0, 1.0], [0.0, 0.0]]),  # Jordan block
            np.array([[0.0, -1.0], [1.0, 0.0]]),  # rotation, complex spectrum
        ],
        ids=["defective", "complex"],
    )
    def test_rejects(self, s):
        with pytest.raises(NotDiagonalizable):
            eigendecompose(s)

    def test_not_square(self):
        with pytest.raises(DimensionMismatch):
            eigendecompose(np.zeros((2, 3)))

    def test_edge_pattern_checked(self):
        s = np.array([[0.0, 1.0], [1.0, 0.0]])
        shift_from_matrix(s, edges=[(0, 1), (1, 0)])
        with pytest.raises(ValueError):
            shift_from_matrix(s, edges=[(0, 1)])


class TestVandermonde:
    def test_small(self):
        sh = eigendecompose(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(vandermonde(sh, 3), [[1, 2, 4], [1, 1, 1]])

    def test_length_one(self):
        sh = er_shift(10, 0.3, 1)
        np.testing.assert_array_equal(vandermonde(sh, 1), np.ones((10, 1)))

    def test_geometric_rows(self):
        sh = er_shift(10, 0.3, 1)
        psi = vandermonde(sh, 4)
        for i, lam in enumerate(sh.lam):
            np.testing.assert_allclose(psi[i], [lam**k for k in range(4)], rtol=1e-12, atol=1e-12)


class TestFilters:
    def test_identity_filter(self, rng):
        sh = er_shift(8, 0.4, 2)
        x = rng.standard_normal(8)
        np.testing.assert_array_equal(apply_filter(sh, GraphFilter([1.0]), x), x)

    def test_directed_cycle_one_shift(self):
        sh = directed_cycle(4)
        np.testing.assert_array_equal(apply_filter(sh, [0.0, 1.0], [1.0, 0, 0, 0]), [0, 1, 0, 0])

    def test_path_by_hand(self):
        sh = eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(apply_filter(sh, [1.0, 2.0], [1.0, 0.0]), [1.0, 2.0])

    @pytest.mark.parametrize("k", [0, 1, 3, 6])
    def test_cycle_circular_shift(self, k):
        n = 7
        sh = directed_cycle(n)
        x = np.arange(1.0, n + 1)
        h = np.zeros(k + 1)
        h[k] = 1.0
        np.testing.assert_array_equal(apply_filter(sh, h, x), np.roll(x, k))

    def test_filter_matrix_basics(self):
        sh = er_shift(6, 0.5, 3)
        np.testing.assert_array_equal(filter_matrix(sh, [1.0]), np.eye(6))
        np.testing.assert_array_equal(filter_matrix(sh, [0.0, 1.0]), sh.s)

    def test_filter_matrix_columns(self, rng):
        sh = er_shift(15, 0.2, 3)
        h = rng.standard_normal(3)
        hm = filter_matrix(sh, h)
        for j in range(15):
            e = np.zeros(15)
            e[j] = 1.0
            np.testing.assert_allclose(hm[:, j], apply_filter(sh, h, e), atol=1e-12)

    def test_filter_length_validated(self):
        with pytest.raises(ValueError):
            GraphFilter([])
        with pytest.raises(ValueError):
            GraphFilter([1.0, np.nan])
        assert GraphFilter([1.0, 2.0, 3.0]).order == 2

    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, seed, a, b):
        r = np.random.default_rng(seed)
        sh = er_shift(9, 0.4, seed)
        h = r.standard_normal(3)
        x, z = r.standard_normal((2, 9))
        lhs = apply_filter(sh, h, a * x + b * z)
        rhs = a * apply_filter(sh, h, x) + b * apply_filter(sh, h, z)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


class TestLiftedOperators:
    def test_length_one(self, rng):
        sh = er_shift(8, 0.4, 5)
        p = lifted_operator_p(sh, 1)
        x = rng.standard_normal(8)
        np.testing.assert_allclose(p @ (2.5 * x), 2.5 * x, atol=1e-10)

    def test_two_node_path(self, rng):
        sh = eigendecompose(np.array([[0.0, 1.0], [1.0, 0.0]]))
        x, h = rng.standard_normal(2), rng.standard_normal(2)
        p = lifted_operator_p(sh, 2)
        np.testing.assert_allclose(p @ vec(np.outer(x, h)), filter_matrix(sh, h) @ x, atol=1e-10)

    def test_khatri_rao_identity(self, rng):
        sh = er_shift(12, 0.3, 5)
        p = lifted_operator_p(sh, 3)
        for _ in range(100):
            x, h = rng.standard_normal(12), rng.standard_normal(3)
            np.testing.assert_allclose(p @ vec(np.outer(x, h)), apply_filter(sh, h, x), atol=1e-9)

    def test_t_identity_dictionary(self):
        sh = er_shift(10, 0.3, 6)
        t = lifted_operator_t(sh, Dictionary(np.eye(10)), 3)
        np.testing.assert_allclose(t, lifted_operator_p(sh, 3), atol=1e-12)

    def test_t_single_atom(self, rng):
        sh = er_shift(10, 0.3, 6)
        d = rng.standard_normal((10, 1))
        h = rng.standard_normal(3)
        t = lifted_operator_t(sh, Dictionary(d), 3)
        np.testing.assert_allclose(t @ vec(np.outer([1.7], h)), 1.7 * apply_filter(sh, h, d[:, 0]), atol=1e-9)

    def test_t_identity(self, rng):
        sh = er_shift(10, 0.3, 7)
        d = rng.standard_normal((10, 4))
        t = lifted_operator_t(sh, Dictionary(d), 3)
        for _ in range(20):
            a, h = rng.standard_normal(4), rng.standard_normal(3)
            np.testing.assert_allclose(t @ vec(np.outer(a, h)), filter_matrix(sh, h) @ d @ a, atol=1e-9)

    def test_t_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            lifted_operator_t(er_shift(10, 0.3, 7), np.ones((9, 2)), 3)

    def test_frequency_response(self, rng):
        sh = er_shift(14, 0.3, 8)
        x, h = rng.standard_normal(14), rng.standard_normal(4)
        lhs = sh.u @ apply_filter(sh, h, x)
        rhs = (vandermonde(sh, 4) @ h) * (sh.u @ x)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_shifted_inputs_matches_p(self, rng):
        sh = er_shift(9, 0.4, 9)
        x = rng.standard_normal(9)
        p = lifted_operator_p(sh, 3)
        np.testing.assert_allclose(shifted_inputs(sh, x, 3), p @ np.kron(np.eye(3), x[:, None]), atol=1e-9)


class TestGenerators:
    def test_empty_er(self):
        sh = generate_graph("er", 50, 0, p=0.0)
        np.testing.assert_array_equal(sh.lam, np.zeros(50))

    def test_ws_edge_count(self):
        sh = generate_graph("ws", 50, 3, k=6, beta=1.0)
        assert np.count_nonzero(np.triu(sh.s)) == 150

    def test_ba_edge_count(self):
        sh = generate_graph("ba", 50, 3, m0=7, m=3)
        assert np.count_nonzero(np.triu(sh.s)) == 7 + 3 * 43

    @pytest.mark.parametrize("model", ["er", "ba", "ws"])
    def test_undirected_simple(self, model):
        sh = generate_graph(model, 30, 11)
        np.testing.assert_array_equal(sh.s, sh.s.T)
        assert np.all(np.diag(sh.s) == 0)
        assert set(np.unique(sh.s)) <= {0.0, 1.0}

    @pytest.mark.parametrize("model", ["er", "ba", "ws"])
    def test_deterministic(self, model):
        a = generate_graph(model, 40, 5)
        b = generate_graph(model, 40, 5)
        assert a.edges() == b.edges()
        assert generate_graph(model, 40, 6).edges() != a.edges()

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            generate_graph("sbm", 10, 0)

    def test_generation_failed(self, monkeypatch):
        import graphdeconv.graph as g

        def boom(_):
            raise NotDiagonalizable("forced")

        monkeypatch.setattr(g, "eigendecompose", boom)
        with pytest.raises(GenerationFailed):
            g.generate_graph("er", 10, 0)

    def test_instance_contract(self):
        sh = er_shift(50, 0.1, 2)
        sig, filt = generate_problem_instance(sh, 3, 8, 123)
        assert len(sig.support) == np.count_nonzero(sig.x) == 8
        assert abs(np.linalg.norm(sig.x) - 1) < 1e-12
        assert abs(np.linalg.norm(filt.h) - 1) < 1e-12
        assert np.linalg.norm(sig.y - filter_matrix(sh, filt) @ sig.x) <= 1e-10

    def test_instance_deterministic(self):
        sh = er_shift(20, 0.2, 2)
        a, fa = generate_problem_instance(sh, 3, 4, 9)
        b, fb = generate_problem_instance(sh, 3, 4, 9)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(fa.h, fb.h)

    def test_identity_filter_override(self):
        sh = er_shift(12, 0.3, 2)
        sig, _ = generate_problem_instance(sh, 1, 12, 4)
        np.testing.assert_allclose(apply_filter(sh, [1.0], sig.x), sig.x)

    def test_subspace_instance(self, rng):
        sh = er_shift(20, 0.2, 2)
        d = Dictionary(rng.standard_normal((20, 5)))
        sig, filt = generate_problem_instance(sh, 3, 5, 1, model="subspace", dictionary=d)
        np.testing.assert_allclose(sig.x, d.d @ sig.alpha)
        assert abs(np.linalg.norm(sig.alpha) - 1) < 1e-12

    def test_sparse_filter_support(self):
        sh = er_shift(20, 0.2, 2)
        _, filt = generate_problem_instance(sh, 4, 3, 1, s_h=2)
        assert np.all(filt.h[2:] == 0) and np.all(filt.h[:2] != 0)


class TestDictionary:
    def test_zero_column_rejected(self):
        with pytest.raises(ValueError):
            Dictionary(np.array([[1.0, 0.0], [2.0, 0.0]]))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            Dictionary(np.array([[np.inf]]))
