"""Linear cone programs and the builders for the recovery subproblems.

A :class:`ConeProgram` is::

    minimize    c^T z
    subject to  A z = b
                G_k z + h_k  in  K_k      for every cone k

with ``K_k`` one of ``free``, ``nonneg``, ``soc`` (``(t, v)`` with
``||v||_2 <= t``) or ``psd``.  PSD cones use the scaled packing of a
symmetric ``d x d`` matrix: upper triangle column by column, off-diagonal
entries multiplied by ``sqrt(2)``, so that ``svec(X) . svec(Y) = Tr(XY)``.
A cone over a slice of ``z`` is the special case where ``G_k`` is a row
selector and ``h_k = 0`` (see :func:`slice_cone`).

The numerical engine is Clarabel (an interior-point conic solver).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

import clarabel
import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NumericalBreakdown

SQRT2 = np.sqrt(2.0)
CONE_KINDS = ("free", "nonneg", "soc", "psd")


# -- symmetric packing -----------------------------------------------------


def svec_size(d: int) -> int:
    return d * (d + 1) // 2


def svec_index(i: int, j: int) -> int:
    """Position of entry ``(i, j)`` (either order) in the packed vector."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def svec(x: np.ndarray) -> np.ndarray:
    d = x.shape[0]
    rows, cols = np.triu_indices(d)
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    scale = np.where(rows == cols, 1.0, SQRT2)
    return x[rows, cols] * scale


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    d = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if svec_size(d) != v.size:
        raise DimensionMismatch(f"length {v.size} is not a packed symmetric size")
    rows, cols = np.triu_indices(d)
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    vals = np.where(rows == cols, v, v / SQRT2)
    x = np.zeros((d, d))
    x[rows, cols] = vals
    x[cols, rows] = vals
    return x


# -- program and result types ----------------------------------------------


@dataclass(frozen=True)
class Cone:
    """Membership ``g @ z + h in K``; ``dim`` is the side for ``psd`` cones.

    ``count > 1`` stacks that many cones of the same kind and dimension, one
    after the other in the rows of ``g``.
    """

    kind: str
    dim: int
    g: sp.csr_matrix
    h: np.ndarray
    count: int = 1

    @property
    def size(self) -> int:
        return svec_size(self.dim) if self.kind == "psd" else self.dim

    @property
    def rows(self) -> int:
        return self.count * self.size

    def pieces(self, s: np.ndarray):
        return s.reshape(self.count, self.size)


def slice_cone(kind: str, start: int, dim: int, n_vars: int) -> Cone:
    """Cone membership of the variable slice starting at ``start``."""
    size = svec_size(dim) if kind == "psd" else dim
    g = sp.csr_matrix(
        (np.ones(size), (np.arange(size), np.arange(start, start + size))), shape=(size, n_vars)
    )
    return Cone(kind, dim, g, np.zeros(size))


def affine_cone(kind: str, dim: int, g, h=None, count: int = 1) -> Cone:
    g = sp.csr_matrix(g)
    h = np.zeros(g.shape[0]) if h is None else np.asarray(h, dtype=float)
    return Cone(kind, dim, g, h, count)


@dataclass(frozen=True)
class ConeProgram:
    c: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    cones: tuple[Cone, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.c.size
        if self.a_eq.shape[1] != n or self.a_eq.shape[0] != self.b_eq.size:
            raise DimensionMismatch("equality system does not match the variable count")
        for cone in self.cones:
            if cone.kind not in CONE_KINDS:
                raise ValueError(f"unknown cone kind {cone.kind!r}")
            if cone.g.shape != (cone.rows, n) or cone.h.size != cone.rows:
                raise DimensionMismatch(f"{cone.kind} cone of dim {cone.dim} is malformed")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def to_json(self) -> str:
        """Debug dump: objective, equality triplets and the cone list."""

        def triplets(m):
            m = sp.coo_matrix(m)
            return {"rows": m.row.tolist(), "cols": m.col.tolist(), "vals": m.data.tolist()}

        doc = {
            "n_vars": self.n_vars,
            "objective": self.c.tolist(),
            "equalities": {**triplets(self.a_eq), "b": self.b_eq.tolist()},
            "cones": [
                {"kind": k.kind, "dim": k.dim, "count": k.count, **triplets(k.g), "h": k.h.tolist()}
                for k in self.cones
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ConeProgram":
        doc = json.loads(text)
        n = doc["n_vars"]
        eq = doc["equalities"]
        a_eq = sp.csr_matrix((eq["vals"], (eq["rows"], eq["cols"])), shape=(len(eq["b"]), n))
        cones = []
        for k in doc["cones"]:
            count = k.get("count", 1)
            rows = count * (svec_size(k["dim"]) if k["kind"] == "psd" else k["dim"])
            g = sp.csr_matrix((k["vals"], (k["rows"], k["cols"])), shape=(rows, n))
            cones.append(Cone(k["kind"], k["dim"], g, np.asarray(k["h"], dtype=float), count))
        return cls(np.asarray(doc["objective"], dtype=float), a_eq, np.asarray(eq["b"], dtype=float), tuple(cones))


@dataclass(frozen=True)
class SolveResult:
    z: np.ndarray
    status: str  # optimal | inaccurate | infeasible | unbounded | max-iters
    objective_value: float
    residuals: tuple[float, float, float]  # primal, dual, gap
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate")


def _clarabel_cones(cone: Cone) -> list:
    if cone.kind == "free":
        return []
    if cone.kind == "nonneg":
        return [clarabel.NonnegativeConeT(cone.rows)]
    if cone.kind == "soc":
        return [clarabel.SecondOrderConeT(cone.dim)] * cone.count
    return [clarabel.PSDTriangleConeT(cone.dim)] * cone.count


def cone_violation(cone: Cone, s: np.ndarray) -> float:
    """Distance-like violation of ``s in K`` (0 when inside)."""
    if cone.kind == "free":
        return 0.0
    if cone.kind == "nonneg":
        return float(max(0.0, -s.min(initial=0.0)))
    parts = cone.pieces(s)
    if cone.kind == "soc":
        return float(max(0.0, (np.linalg.norm(parts[:, 1:], axis=1) - parts[:, 0]).max()))
    mats = np.stack([smat(v) for v in parts])
    return float(max(0.0, -np.linalg.eigvalsh(mats).min()))


_STATUS = {
    "Solved": "optimal",
    "AlmostSolved": "inaccurate",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max-iters",
    "MaxTime": "max-iters",
}


def solve(
    p: ConeProgram,
    feas_tol: float = 1e-8,
    gap_tol: float = 1e-8,
    max_iters: int = 200,
) -> SolveResult:
    """Solve a cone program.

    Infeasible and unbounded programs are reported through ``status``;
    a diverging or stalled solve raises :class:`NumericalBreakdown`.
    """
    n = p.n_vars
    blocks = [p.a_eq]
    rhs = [p.b_eq]
    cones = []
    if p.b_eq.size:
        cones.append(clarabel.ZeroConeT(p.b_eq.size))
    for cone in p.cones:
        native = _clarabel_cones(cone)
        if not native:
            continue
        blocks.append(-cone.g)
        rhs.append(cone.h)
        cones.extend(native)
    a = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = feas_tol
    settings.tol_gap_abs = gap_tol
    settings.tol_gap_rel = gap_tol
    settings.max_iter = max_iters
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), p.c, a, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    status = _STATUS.get(raw)
    if status is None:
        raise NumericalBreakdown(f"conic solver stopped with status {raw}")
    z = np.asarray(sol.x, dtype=float)
    scale = 1.0 + (np.abs(p.b_eq).max() if p.b_eq.size else 0.0)
    primal = float(np.abs(p.a_eq @ z - p.b_eq).max(initial=0.0)) / scale
    for cone in p.cones:
        primal = max(primal, cone_violation(cone, cone.g @ z + cone.h) / scale)
    obj = float(p.c @ z)
    gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
    return SolveResult(
        z=z,
        status=status,
        objective_value=obj,
        residuals=(primal, float(sol.r_dual), float(gap)),
        iterations=int(sol.iterations),
    )


# -- builders --------------------------------------------------------------


def _noise_cone(a_op: sp.spmatrix, y: np.ndarray, eps: float, n_vars: int, offset: int = 0) -> Cone:
    """``||y - A z||_2^2 <= eps`` as the cone ``(sqrt(eps), y - A z) in SOC``."""
    m = a_op.shape[0]
    g = sp.vstack(
        [sp.csr_matrix((1, n_vars)), -sp.hstack([sp.csr_matrix((m, offset)), a_op, sp.csr_matrix((m, n_vars - offset - a_op.shape[1]))])]
    )
    h = np.concatenate([[np.sqrt(eps)], y])
    return affine_cone("soc", m + 1, g, h)


def build_weighted_l1(a_eq, b_eq, weights, noise_eps: Optional[float] = None) -> ConeProgram:
    """``min sum_n w_n |x_n|  s.t.  A x = b`` (or ``||b - A x||^2 <= eps``).

    Epigraph form over ``z = (x, t)``: minimize ``w . t`` with
    ``t - x >= 0`` and ``t + x >= 0``.
    """
    a = sp.csr_matrix(np.atleast_2d(a_eq))
    b = np.asarray(b_eq, dtype=float).ravel()
    n = a.shape[1]
    w = np.broadcast_to(np.asarray(weights, dtype=float), (n,)).copy()
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if a.shape[0] != b.size:
        raise DimensionMismatch("rows of A and length of b differ")
    n_vars = 2 * n
    eye = sp.identity(n, format="csr")
    cones = [
        affine_cone("nonneg", n, sp.hstack([-eye, eye])),
        affine_cone("nonneg", n, sp.hstack([eye, eye])),
    ]
    if noise_eps is None or noise_eps <= 0:
        a_full = sp.hstack([a, sp.csr_matrix((a.shape[0], n))], format="csr")
        b_full = b
    else:
        cones.append(_noise_cone(a, b, noise_eps, n_vars))
        a_full = sp.csr_matrix((0, n_vars))
        b_full = np.zeros(0)
    c = np.concatenate([np.zeros(n), w])
    return ConeProgram(c, a_full, b_full, tuple(cones), meta={"kind": "weighted-l1", "n": n})


@dataclass(frozen=True)
class MMWeights:
    """Weights of one majorization step of the lifted rank problem.

    ``delta1`` (rows x rows) and ``delta2`` (L x L) weight the two diagonal
    blocks of the semidefinite embedding, ``a`` the row norms, ``b`` and
    ``w`` the column norms.
    """

    delta1: np.ndarray
    delta2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    tau_x: float = 0.0
    tau_h: float = 0.0

    @classmethod
    def initial(cls, rows: int, l: int, tau_x=0.0, tau_h=0.0, w=None) -> "MMWeights":
        w = np.ones(l) if w is None else np.asarray(w, dtype=float)
        return cls(np.eye(rows), np.eye(l), np.ones(rows), np.ones(l), w, tau_x, tau_h)


def _sym_sqrt(m: np.ndarray, inverse: bool = False) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    vals = np.clip(vals, 0.0, None)
    if inverse:
        vals = 1.0 / np.sqrt(vals)
    else:
        vals = np.sqrt(vals)
    return (vecs * vals) @ vecs.T


def build_mm_sdp(
    lifted_op,
    y_obs,
    weights: MMWeights,
    extra_eq=None,
    noise_eps: Optional[float] = None,
    embedding: str = "block",
) -> ConeProgram:
    """Cone program of one majorization step over the lifted matrix ``Z`` (rows x L).

    minimize    Tr(D1 T1) + Tr(D2 T2) + tau_x sum_n a_n ||z_n^T|| + tau_h sum_l w_l b_l ||z_l||
    subject to  lifted_op vec(Z) = y_obs,   extra_eq vec(Z) = 0,
                [[T1, Z], [Z^T, T2]] psd

    ``embedding='block'`` keeps the single (rows + L) PSD block.
    ``embedding='rowwise'`` uses the equivalent program in which the two
    trace terms become ``sum_n t_n + Tr(B)`` with one (L+1) PSD block
    ``[[B, w_n], [w_n^T, t_n]]`` per row ``w_n`` of ``D1^{1/2} Z D2^{1/2}``;
    both have the same optimal value and ``Z``.  Use :func:`mm_unpack` to read
    ``(Z, T1, T2)`` back from a solution.
    """
    p_op = np.atleast_2d(np.asarray(lifted_op, dtype=float))
    y = np.asarray(y_obs, dtype=float).ravel()
    rows = weights.delta1.shape[0]
    l = weights.delta2.shape[0]
    nz = rows * l
    if p_op.shape[1] != nz:
        raise DimensionMismatch(f"operator has {p_op.shape[1]} columns, expected {rows}*{l}")
    if p_op.shape[0] != y.size:
        raise DimensionMismatch("operator rows and observation length differ")
    for name, vec_, size in (("a", weights.a, rows), ("b", weights.b, l), ("w", weights.w, l)):
        if np.asarray(vec_).size != size:
            raise DimensionMismatch(f"weight vector {name} must have length {size}")
    e_op = None if extra_eq is None else np.atleast_2d(np.asarray(extra_eq, dtype=float))
    if e_op is not None and e_op.size and e_op.shape[1] != nz:
        raise DimensionMismatch("extra equality rows must act on vec(Z)")

    if embedding == "block":
        return _build_block(p_op, y, weights, e_op, noise_eps, rows, l)
    if embedding == "rowwise":
        return _build_rowwise(p_op, y, weights, e_op, noise_eps, rows, l)
    raise ValueError(f"unknown embedding {embedding!r}")


def _z_map_block(rows: int, l: int) -> np.ndarray:
    """Packed index of ``Z[n, k]`` (vec order) inside svec of the block matrix."""
    n_idx = np.tile(np.arange(rows), l)
    k_idx = np.repeat(np.arange(l), rows)
    return np.array([svec_index(i, rows + k) for i, k in zip(n_idx, k_idx)])


def _norm_cones(zsel: sp.csr_matrix, rows: int, l: int, n_vars: int, u0: int, v0: int, use_rows, use_cols):
    """SOC epigraphs ``(u_n, z_n^T)`` and ``(v_k, z_k)``; ``zsel`` maps z to vec(Z)."""
    cones = []
    if use_rows:
        # cone n occupies rows n*(l+1) .. n*(l+1)+l: epigraph var, then Z[n, :]
        top = sp.csr_matrix((np.ones(rows), (np.arange(rows), u0 + np.arange(rows))), shape=(rows, n_vars))
        order = np.empty(rows * (l + 1), dtype=np.int64)
        stacked = sp.vstack([top, zsel], format="csr")
        for n in range(rows):
            order[n * (l + 1)] = n
            order[n * (l + 1) + 1 : (n + 1) * (l + 1)] = rows + n + rows * np.arange(l)
        cones.append(affine_cone("soc", l + 1, stacked[order], count=rows))
    if use_cols:
        top = sp.csr_matrix((np.ones(l), (np.arange(l), v0 + np.arange(l))), shape=(l, n_vars))
        order = np.empty(l * (rows + 1), dtype=np.int64)
        stacked = sp.vstack([top, zsel], format="csr")
        for k in range(l):
            order[k * (rows + 1)] = k
            order[k * (rows + 1) + 1 : (k + 1) * (rows + 1)] = l + k * rows + np.arange(rows)
        cones.append(affine_cone("soc", rows + 1, stacked[order], count=l))
    return cones


def _equalities(p_op, y, e_op, zsel, noise_eps, n_vars):
    eq_rows, eq_rhs, cones = [], [], []
    p_z = sp.csr_matrix(p_op) @ zsel
    if noise_eps is None or noise_eps <= 0:
        eq_rows.append(p_z)
        eq_rhs.append(y)
    else:
        g = sp.vstack([sp.csr_matrix((1, n_vars)), -p_z])
        cones.append(affine_cone("soc", y.size + 1, g, np.concatenate([[np.sqrt(noise_eps)], y])))
    if e_op is not None and e_op.size:
        eq_rows.append(sp.csr_matrix(e_op) @ zsel)
        eq_rhs.append(np.zeros(e_op.shape[0]))
    a_eq = sp.vstack(eq_rows, format="csr") if eq_rows else sp.csr_matrix((0, n_vars))
    b_eq = np.concatenate(eq_rhs) if eq_rhs else np.zeros(0)
    return a_eq, b_eq, cones


def _build_block(p_op, y, wts: MMWeights, e_op, noise_eps, rows, l):
    side = rows + l
    nsv = svec_size(side)
    use_rows = wts.tau_x > 0
    use_cols = wts.tau_h > 0
    u0 = nsv
    v0 = u0 + (rows if use_rows else 0)
    n_vars = v0 + (l if use_cols else 0)
    zidx = _z_map_block(rows, l)
    zsel = sp.csr_matrix((np.full(zidx.size, 1.0 / SQRT2), (np.arange(zidx.size), zidx)), shape=(zidx.size, n_vars))

    delta = np.zeros((side, side))
    delta[:rows, :rows] = wts.delta1
    delta[rows:, rows:] = wts.delta2
    c = np.zeros(n_vars)
    c[:nsv] = svec((delta + delta.T) / 2)
    if use_rows:
        c[u0 : u0 + rows] = wts.tau_x * np.asarray(wts.a)
    if use_cols:
        c[v0 : v0 + l] = wts.tau_h * np.asarray(wts.w) * np.asarray(wts.b)

    a_eq, b_eq, cones = _equalities(p_op, y, e_op, zsel, noise_eps, n_vars)
    cones = [slice_cone("psd", 0, side, n_vars)] + cones
    cones += _norm_cones(zsel, rows, l, n_vars, u0, v0, use_rows, use_cols)
    meta = {"kind": "mm-sdp", "embedding": "block", "rows": rows, "l": l}
    return ConeProgram(c, a_eq, b_eq, tuple(cones), meta=meta)


def _build_rowwise(p_op, y, wts: MMWeights, e_op, noise_eps, rows, l):
    nz = rows * l
    nb = svec_size(l)
    b0, t0 = nz, nz + nb
    use_rows = wts.tau_x > 0
    use_cols = wts.tau_h > 0
    u0 = t0 + rows
    v0 = u0 + (rows if use_rows else 0)
    n_vars = v0 + (l if use_cols else 0)
    zsel = sp.csr_matrix((np.ones(nz), (np.arange(nz), np.arange(nz))), shape=(nz, n_vars))

    r1 = _sym_sqrt(wts.delta1)
    r2 = _sym_sqrt(wts.delta2)
    kw = np.kron(r2.T, r1)  # vec(R1 Z R2) = kw vec(Z)

    c = np.zeros(n_vars)
    for k in range(l):
        c[b0 + svec_index(k, k)] = 1.0
    c[t0 : t0 + rows] = 1.0
    if use_rows:
        c[u0 : u0 + rows] = wts.tau_x * np.asarray(wts.a)
    if use_cols:
        c[v0 : v0 + l] = wts.tau_h * np.asarray(wts.w) * np.asarray(wts.b)

    a_eq, b_eq, cones = _equalities(p_op, y, e_op, zsel, noise_eps, n_vars)

    # one packed (L+1) block per row: B entries, then sqrt(2) w_n, then t_n
    d = l + 1
    nsv = svec_size(d)
    r_idx, c_idx, vals = [], [], []
    b_pos = np.array([svec_index(i, j) for j in range(l) for i in range(j + 1)])
    b_var = b0 + b_pos  # B packs exactly like the leading L x L corner
    w_pos = np.array([svec_index(k, l) for k in range(l)])
    for n in range(rows):
        base = n * nsv
        r_idx.append(base + b_pos)
        c_idx.append(b_var)
        vals.append(np.ones(b_pos.size))
        coeffs = SQRT2 * kw[n + rows * np.arange(l)]  # l x nz
        nzr, nzc = np.nonzero(coeffs)
        r_idx.append(base + w_pos[nzr])
        c_idx.append(nzc)
        vals.append(coeffs[nzr, nzc])
        r_idx.append([base + svec_index(l, l)])
        c_idx.append([t0 + n])
        vals.append([1.0])
    g = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(rows * nsv, n_vars)
    )
    cones.append(affine_cone("psd", d, g, count=rows))
    cones += _norm_cones(zsel, rows, l, n_vars, u0, v0, use_rows, use_cols)
    meta = {"kind": "mm-sdp", "embedding": "rowwise", "rows": rows, "l": l, "r1": r1, "r2": r2}
    return ConeProgram(c, a_eq, b_eq, tuple(cones), meta=meta)


def mm_unpack(p: ConeProgram, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Z, Theta1, Theta2)`` from a solution of :func:`build_mm_sdp`.

    For the row-wise embedding the Theta blocks are the minimizers of the
    trace terms for the returned ``Z`` (closed form through the SVD of
    ``D1^{1/2} Z D2^{1/2}``).
    """
    rows, l = p.meta["rows"], p.meta["l"]
    if p.meta["embedding"] == "block":
        x = smat(z[: svec_size(rows + l)])
        return x[:rows, rows:].copy(), x[:rows, :rows].copy(), x[rows:, rows:].copy()
    zmat = z[: rows * l].reshape(rows, l, order="F")
    r1, r2 = p.meta["r1"], p.meta["r2"]
    u, s, vt = np.linalg.svd(r1 @ zmat @ r2, full_matrices=False)
    r1i = np.linalg.pinv(r1, hermitian=True)
    r2i = np.linalg.pinv(r2, hermitian=True)
    left = r1i @ u
    right = r2i @ vt.T
    return zmat, (left * s) @ left.T, (right * s) @ right.T
