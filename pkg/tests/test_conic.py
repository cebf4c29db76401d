import numpy as np
import pytest
import scipy.linalg as sla
import scipy.optimize as so
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from graphdeconv.conic import (
    ConeProgram,
    MMWeights,
    affine_cone,
    build_mm_sdp,
    build_weighted_l1,
    mm_unpack,
    slice_cone,
    smat,
    solve,
    svec,
    svec_size,
)
from graphdeconv.errors import DimensionMismatch
from graphdeconv.graph import generate_graph, lifted_operator_p, vec

from oracles import lp_oracle


def program(c, a_eq=None, b_eq=None, cones=()):
    c = np.asarray(c, dtype=float)
    a_eq = sp.csr_matrix((0, c.size)) if a_eq is None else sp.csr_matrix(np.atleast_2d(a_eq))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    return ConeProgram(c, a_eq, b_eq, tuple(cones))


def nuclear_oracle(p, y, rows, l):
    """Minimum nuclear norm over {Z : P vec(Z) = y} by smoothed continuation.

    Minimizes sum_i sqrt(sigma_i^2 + d^2) over the affine set with BFGS for a
    decreasing sequence of d; no conic solver involved.
    """
    z0 = np.linalg.lstsq(p, y, rcond=None)[0]
    null = sla.null_space(p)

    def f(c, d):
        u, s, vt = np.linalg.svd((z0 + null @ c).reshape(rows, l, order="F"), full_matrices=False)
        g = (u * (s / np.sqrt(s**2 + d**2))) @ vt
        return np.sum(np.sqrt(s**2 + d**2)), null.T @ g.ravel(order="F")

    c = np.zeros(null.shape[1])
    for d in 10.0 ** -np.arange(1, 10):
        c = so.minimize(f, c, args=(d,), jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": 5000}).x
    return (z0 + null @ c).reshape(rows, l, order="F")


def rank_one_instance(n, l, seed, p=0.6):
    sh = generate_graph("er", n, seed, p=p)
    r = np.random.default_rng(seed)
    x, h = r.standard_normal(n), r.standard_normal(l)
    op = lifted_operator_p(sh, l)
    return op, op @ vec(np.outer(x, h))


class TestPacking:
    def test_roundtrip(self, rng):
        a = rng.standard_normal((5, 5))
        a = a + a.T
        np.testing.assert_allclose(smat(svec(a)), a)
        assert svec(a).size == svec_size(5)

    @given(st.integers(0, 10_000))
    def test_inner_product_preserved(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal((2, 4, 4))
        a, b = a + a.T, b + b.T
        assert svec(a) @ svec(b) == pytest.approx(np.trace(a @ b), rel=1e-10, abs=1e-12)

    def test_bad_length(self):
        with pytest.raises(DimensionMismatch):
            smat(np.ones(4))


class TestSolveTrivial:
    def test_nonneg(self):
        p = program([1.0], cones=[affine_cone("nonneg", 1, [[1.0]], [-1.0])])
        res = solve(p)
        assert res.status == "optimal"
        assert res.z[0] == pytest.approx(1.0, abs=1e-7)

    def test_soc(self):
        # z = (t, u1, u2) with u = (3, 4) pinned and ||u|| <= t
        p = program([1, 0, 0], [[0, 1, 0], [0, 0, 1]], [3, 4], [slice_cone("soc", 0, 3, 3)])
        res = solve(p)
        assert res.z[0] == pytest.approx(5.0, abs=1e-6)

    def test_psd_pinned(self):
        # svec of a 2x2 matrix: (x11, sqrt2 x12, x22)
        c = svec(np.eye(2))
        a = [[1, 0, 0], [0, 0, 1], [0, 1, 0]]
        p = program(c, a, [1, 1, 0.5 * np.sqrt(2)], [slice_cone("psd", 0, 2, 3)])
        res = solve(p)
        assert res.objective_value == pytest.approx(2.0, abs=1e-6)
        np.testing.assert_allclose(smat(res.z), [[1, 0.5], [0.5, 1]], atol=1e-6)

    def test_infeasible(self):
        p = program([1.0], [[1.0]], [0.0], [affine_cone("nonneg", 1, [[1.0]], [-1.0])])
        assert solve(p).status == "infeasible"

    def test_unbounded(self):
        p = program([1.0], cones=[affine_cone("nonneg", 1, [[-1.0]], [1.0])])
        assert solve(p).status == "unbounded"

    def test_residuals_within_tolerance(self, rng):
        a = rng.standard_normal((3, 6))
        res = solve(build_weighted_l1(a, a @ rng.standard_normal(6), 1.0))
        assert res.status == "optimal"
        primal, _, gap = res.residuals
        assert primal <= 1e-8 and gap <= 1e-8

    def test_malformed(self):
        with pytest.raises(DimensionMismatch):
            program([1.0, 2.0], [[1.0]], [0.0])

    def test_json_roundtrip(self, rng):
        a = rng.standard_normal((3, 5))
        p = build_weighted_l1(a, rng.standard_normal(3), rng.uniform(0.5, 2, 5))
        q = ConeProgram.from_json(p.to_json())
        np.testing.assert_allclose(solve(q).z, solve(p).z, atol=1e-9)


class TestWeightedL1:
    def test_size(self):
        p = build_weighted_l1(np.ones((2, 5)), [1.0, 1.0], 1.0)
        assert p.n_vars == 10
        assert p.a_eq.shape[0] == 2

    def test_e1(self):
        w = np.array([2.5, 1.0, 1.0])
        res = solve(build_weighted_l1(np.eye(3), [1.0, 0.0, 0.0], w))
        assert res.objective_value == pytest.approx(2.5, abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_lp_oracle(self, seed):
        r = np.random.default_rng(seed)
        a, b, w = r.standard_normal((3, 6)), r.standard_normal(3), r.uniform(0.5, 2.0, 6)
        res = solve(build_weighted_l1(a, b, w))
        x_lp, f_lp = lp_oracle(a, b, w)
        assert res.objective_value == pytest.approx(f_lp, abs=1e-7)
        np.testing.assert_allclose(res.z[:6], x_lp, atol=1e-7)

    def test_square_orthonormal(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        b = rng.standard_normal(5)
        res = solve(build_weighted_l1(q, b, 1.0))
        np.testing.assert_allclose(res.z[:5], q.T @ b, atol=1e-7)

    def test_weak_duality(self, rng):
        a, b = rng.standard_normal((4, 9)), rng.standard_normal(4)
        w = rng.uniform(0.5, 2.0, 9)
        res = solve(build_weighted_l1(a, b, w))
        for _ in range(20):
            feasible = np.linalg.lstsq(a, b, rcond=None)[0] + sla.null_space(a) @ rng.standard_normal(5)
            assert w @ np.abs(feasible) >= res.objective_value - 1e-6

    def test_noise_ball(self, rng):
        a = rng.standard_normal((4, 8))
        b = rng.standard_normal(4)
        res = solve(build_weighted_l1(a, b, 1.0, noise_eps=0.01))
        assert np.sum((b - a @ res.z[:8]) ** 2) <= 0.01 + 1e-7
        assert res.objective_value <= lp_oracle(a, b, np.ones(8))[1] + 1e-7

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            build_weighted_l1(np.eye(2), [1.0, 1.0], [1.0, -1.0])


class TestMMProgram:
    @pytest.mark.parametrize("embedding", ["block", "rowwise"])
    def test_nuclear_objective(self, embedding):
        op, y = rank_one_instance(5, 2, 3)
        p = build_mm_sdp(op, y, MMWeights.initial(5, 2), embedding=embedding)
        res = solve(p)
        z, t1, t2 = mm_unpack(p, res.z)
        assert res.objective_value == pytest.approx(np.trace(t1) + np.trace(t2), abs=1e-6)
        assert res.objective_value == pytest.approx(2 * np.linalg.svd(z, compute_uv=False).sum(), abs=1e-6)

    @pytest.mark.parametrize("embedding", ["block", "rowwise"])
    def test_pinned(self, embedding):
        y = np.array([0.7, -1.2])
        p = build_mm_sdp(np.eye(2), y, MMWeights.initial(2, 1), embedding=embedding)
        z, _, _ = mm_unpack(p, solve(p).z)
        np.testing.assert_allclose(z[:, 0], y, atol=1e-7)

    @pytest.mark.parametrize("seed", range(4))
    def test_rank_one_step_vs_oracle(self, seed):
        op, y = rank_one_instance(4, 2, seed)
        p = build_mm_sdp(op, y, MMWeights.initial(4, 2))
        res = solve(p, feas_tol=1e-12, gap_tol=1e-12, max_iters=500)
        assert res.ok
        z, _, _ = mm_unpack(p, res.z)
        np.testing.assert_allclose(z, nuclear_oracle(op, y, 4, 2), atol=1e-5)

    @pytest.mark.parametrize("seed", range(3))
    def test_block_rowwise_agree(self, seed):
        op, y = rank_one_instance(6, 3, seed, p=0.4)
        r = np.random.default_rng(seed)
        g1, g2 = r.standard_normal((6, 6)), r.standard_normal((3, 3))
        wts = MMWeights(g1 @ g1.T + np.eye(6), g2 @ g2.T + np.eye(3), r.uniform(0.5, 2, 6), r.uniform(0.5, 2, 3), np.ones(3), 0.1, 0.05)
        out = {}
        for emb in ("block", "rowwise"):
            p = build_mm_sdp(op, y, wts, embedding=emb)
            res = solve(p, feas_tol=1e-10, gap_tol=1e-10)
            out[emb] = (res.objective_value, mm_unpack(p, res.z)[0])
        assert out["block"][0] == pytest.approx(out["rowwise"][0], rel=1e-6)
        np.testing.assert_allclose(out["block"][1], out["rowwise"][1], atol=1e-4)

    @pytest.mark.parametrize("embedding", ["block", "rowwise"])
    def test_psd_feasibility(self, embedding):
        op, y = rank_one_instance(6, 3, 11, p=0.4)
        p = build_mm_sdp(op, y, MMWeights.initial(6, 3, tau_x=0.2, tau_h=0.1), embedding=embedding)
        z, t1, t2 = mm_unpack(p, solve(p).z)
        block = np.block([[t1, z], [z.T, t2]])
        assert np.linalg.eigvalsh(block).min() >= -1e-7

    def test_weak_duality(self, rng):
        op, y = rank_one_instance(5, 2, 4)
        p = build_mm_sdp(op, y, MMWeights.initial(5, 2))
        res = solve(p)
        z0 = np.linalg.lstsq(op, y, rcond=None)[0]
        null = sla.null_space(op)
        for _ in range(20):
            zf = (z0 + null @ rng.standard_normal(null.shape[1])).reshape(5, 2, order="F")
            assert 2 * np.linalg.svd(zf, compute_uv=False).sum() >= res.objective_value - 1e-6

    def test_extra_equalities(self):
        op, y = rank_one_instance(5, 2, 2)
        e = np.zeros((1, 10))
        e[0, 0] = 1.0  # Z[0, 0] = 0
        p = build_mm_sdp(op, y, MMWeights.initial(5, 2), extra_eq=e, embedding="rowwise")
        res = solve(p)
        assert res.ok
        z, _, _ = mm_unpack(p, res.z)
        assert abs(z[0, 0]) <= 1e-7
        np.testing.assert_allclose(op @ vec(z), y, atol=1e-7)

    def test_noise_variant(self):
        op, y = rank_one_instance(5, 2, 5)
        p = build_mm_sdp(op, y, MMWeights.initial(5, 2), noise_eps=1e-2, embedding="rowwise")
        z, _, _ = mm_unpack(p, solve(p).z)
        assert np.sum((y - op @ vec(z)) ** 2) <= 1e-2 + 1e-7

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatch):
            build_mm_sdp(np.ones((3, 7)), np.ones(3), MMWeights.initial(4, 2))
        with pytest.raises(DimensionMismatch):
            build_mm_sdp(np.ones((3, 8)), np.ones(2), MMWeights.initial(4, 2))
