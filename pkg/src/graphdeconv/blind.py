"""Blind deconvolution: joint recovery of the input and the filter.

The bilinear model ``y_M = C_M H(h) x`` is lifted to the linear model
``y_M = P_M vec(Z)`` with the rank-one unknown ``Z = x h^T``.  The rank (and
the row/column sparsity) of ``Z`` is promoted by majorization-minimization of

    sum_j log det(Theta_j + eps1 I) + tau_x sum_n log(||z_n^T|| + eps2)
                                    + tau_h sum_l w_l log(||z_l|| + eps3)

over the semidefinite embedding ``[[Theta1, Z], [Z^T, Theta2]] >= 0``.  Each
step is a convex cone program; the first one (unit weights) is the nuclear
norm plus l2,1 program.  The final pair ``(x, h)`` comes from a best rank-one
fit, with or without known input values.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conic import MMWeights, build_mm_sdp, mm_unpack, solve
from .errors import DimensionMismatch, Infeasible, InconsistentSideInfo, ZeroFilter, ZeroMatrix
from .graph import Dictionary, GraphShift, lifted_operator_p, lifted_operator_t, vec
from .sampling import SelectionSet

SIGN_TOL = 1e-9
EIG_FLOOR = 1e-14


class SingularB(RuntimeWarning):
    """The side-information constraint matrix is rank deficient."""


@dataclass(frozen=True)
class MMOptions:
    eps1: float = 1e-2
    eps2: float = 1e-2
    eps3: float = 1e-2
    max_iters: int = 10
    rel_tol: float = 1e-4
    surrogate: str = "logdet"  # or "nuclear"
    embedding: str = "rowwise"  # or "block"

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise ValueError("eps1, eps2 and eps3 must be positive")
        if self.surrogate not in ("logdet", "nuclear"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class BlindProblem:
    """Blind recovery from ``y_m`` observed on ``sampling``.

    ``dictionary`` switches to the subspace input model ``x = D_x alpha``
    (no sparsity terms).  ``known``/``x_k`` carry known input values; ``eps``
    is an optional bound on the squared observation residual.
    """

    shift: GraphShift
    l: int
    sampling: SelectionSet
    y_m: np.ndarray
    known: Optional[SelectionSet] = None
    x_k: Optional[np.ndarray] = None
    eps: float = 0.0
    tau_x: float = 0.0
    tau_h: float = 0.0
    weights: Optional[np.ndarray] = None
    dictionary: Optional[Dictionary] = None
    mm: MMOptions = field(default_factory=MMOptions)

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y_m, dtype=float))
        if y.size != len(self.sampling):
            raise DimensionMismatch("one observation per sampled node is required")
        if len(self.sampling) < 1:
            raise ValueError("at least one observation is required")
        object.__setattr__(self, "y_m", y)
        if self.l < 1:
            raise ValueError("filter length must be >= 1")
        if self.tau_x < 0 or self.tau_h < 0:
            raise ValueError("regularization weights must be nonnegative")
        if (self.known is None) != (self.x_k is None):
            raise ValueError("known inputs need both the index set and the values")
        if self.known is not None:
            xk = np.atleast_1d(np.asarray(self.x_k, dtype=float))
            if xk.size != len(self.known):
                raise DimensionMismatch("x_k length differs from the known set size")
            object.__setattr__(self, "x_k", xk)
        w = np.ones(self.l) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.size != self.l or np.any(w <= 0):
            raise ValueError("filter weights must be positive, one per tap")
        object.__setattr__(self, "weights", w)
        if self.dictionary is not None and self.dictionary.d.shape[0] != self.shift.n:
            raise DimensionMismatch("dictionary rows must match the node count")

    @property
    def n_known(self) -> int:
        return 0 if self.known is None else len(self.known)


@dataclass(frozen=True)
class BlindResult:
    z_hat: np.ndarray
    x_hat: np.ndarray
    h_hat: np.ndarray
    y_hat: np.ndarray
    iterations: int
    history: tuple[float, ...]
    singular_values: np.ndarray
    alpha_hat: Optional[np.ndarray] = None

    def to_json_dict(self) -> dict:
        doc = {
            "x_hat": self.x_hat.tolist(),
            "h_hat": self.h_hat.tolist(),
            "y_hat": self.y_hat.tolist(),
            "singular_values": self.singular_values.tolist(),
            "history": list(self.history),
            "iterations": self.iterations,
        }
        if self.alpha_hat is not None:
            doc["alpha_hat"] = self.alpha_hat.tolist()
        return doc


# -- rank-one decompositions -------------------------------------------------


def sign_convention(x: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip both factors so the first entry of ``h`` above 1e-9 in magnitude is positive."""
    big = np.flatnonzero(np.abs(h) > SIGN_TOL)
    if big.size and h[big[0]] < 0:
        return -x, -h
    return x, h


def rank_one_plain(z_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-one fit ``sqrt(s1) u1, sqrt(s1) v1`` of ``z_hat``."""
    z = np.atleast_2d(np.asarray(z_hat, dtype=float))
    u, s, vt = np.linalg.svd(z, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise ZeroMatrix("cannot factor an all-zero matrix")
    root = np.sqrt(s[0])
    return sign_convention(root * u[:, 0], root * vt[0])


def _principal(m: np.ndarray) -> tuple[float, np.ndarray]:
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return float(vals[-1]), vecs[:, -1]


def rank_one_known_inputs(z_hat: np.ndarray, known: SelectionSet, x_k) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-one fit ``x h^T`` of ``z_hat`` with ``x`` fixed to ``x_k`` on ``known``.

    The filter direction is the principal eigenvector of
    ``Z_Kc^T Z_Kc + Z_K^T x_K x_K^T Z_K / ||x_K||^2``; the known values also
    fix the scale.
    """
    z = np.atleast_2d(np.asarray(z_hat, dtype=float))
    x_k = np.asarray(x_k, dtype=float).ravel()
    if known.n != z.shape[0] or x_k.size != len(known):
        raise DimensionMismatch("known set does not match the rows of z_hat")
    if len(known) == 0:
        raise ValueError("need at least one known input")
    nrm2 = float(x_k @ x_k)
    if nrm2 == 0.0:
        raise ZeroFilter("known input values are all zero")
    k = known.array
    kc = known.complement().array
    zk, zkc = z[k], z[kc]
    proj = zk.T @ x_k
    top, h_dir = _principal(zkc.T @ zkc + np.outer(proj, proj) / nrm2)
    if top <= EIG_FLOOR:
        raise ZeroFilter("principal eigenvalue vanishes")
    h = (h_dir @ proj / nrm2) * h_dir
    hn2 = float(h @ h)
    if hn2 <= EIG_FLOOR:
        raise ZeroFilter("the known rows carry no filter energy")
    x = np.empty(z.shape[0])
    x[k] = x_k
    x[kc] = zkc @ h / hn2
    return x, h


def rank_one_subspace_known_inputs(
    w_hat: np.ndarray, dictionary: Dictionary, known: SelectionSet, x_k
) -> tuple[np.ndarray, np.ndarray]:
    """Best rank-one fit ``alpha h^T`` of ``w_hat`` subject to ``D_K alpha = x_K``.

    ``alpha`` is the principal eigenvector of ``P^T W W^T P`` where ``P``
    projects onto the null space of ``B = [I_{K-1} 0] (I - x_K x_K^T/||x_K||^2) D_K``,
    rescaled so that ``D_K alpha = x_K`` in least squares; ``h = W^T alpha / ||alpha||^2``.
    """
    w = np.atleast_2d(np.asarray(w_hat, dtype=float))
    d = dictionary.d
    x_k = np.asarray(x_k, dtype=float).ravel()
    if d.shape[1] != w.shape[0]:
        raise DimensionMismatch("dictionary atoms do not match the rows of w_hat")
    if known.n != d.shape[0] or x_k.size != len(known):
        raise DimensionMismatch("known set does not match the dictionary rows")
    kk = len(known)
    if kk == 0:
        raise ValueError("need at least one known input")
    nrm2 = float(x_k @ x_k)
    if nrm2 == 0.0:
        raise InconsistentSideInfo("known input values are all zero")
    d_k = d[known.array]
    perp = np.eye(kk) - np.outer(x_k, x_k) / nrm2
    b = (perp @ d_k)[: kk - 1]
    dim = d.shape[1]
    if b.shape[0]:
        gram = b @ b.T
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            warnings.warn("side-information constraints are rank deficient", SingularB, stacklevel=2)
        p_b = np.eye(dim) - b.T @ np.linalg.pinv(gram) @ b
    else:
        p_b = np.eye(dim)
    top, alpha = _principal(p_b.T @ w @ w.T @ p_b)
    if top <= EIG_FLOOR:
        raise ZeroFilter("principal eigenvalue vanishes")
    fit = d_k @ alpha
    fn2 = float(fit @ fit)
    if fn2 <= EIG_FLOOR * max(1.0, nrm2):
        raise InconsistentSideInfo("the constrained direction does not reach the known values")
    alpha = alpha * float(fit @ x_k) / fn2
    if np.linalg.norm(d_k @ alpha - x_k) > 1e-6 * np.sqrt(nrm2):
        raise InconsistentSideInfo("no scaling of the direction reproduces the known values")
    an2 = float(alpha @ alpha)
    return alpha, w.T @ alpha / an2


def metric_rmse_blind(truth, estimate, k: int = 0) -> float:
    """``||x_hat h_hat^T - x h^T||_F / ((R - k) L)`` with ``R`` the length of ``x``.

    ``truth`` and ``estimate`` are ``(x, h)`` pairs (or ``(alpha, h)`` for the
    subspace model, where ``R`` is the subspace dimension).
    """
    x, h = (np.asarray(v, dtype=float).ravel() for v in truth)
    xe, he = (np.asarray(v, dtype=float).ravel() for v in estimate)
    if x.shape != xe.shape or h.shape != he.shape:
        raise DimensionMismatch("truth and estimate shapes differ")
    denom = (x.size - k) * h.size
    if denom <= 0:
        raise ValueError("known count must be smaller than the signal length")
    return float(np.linalg.norm(np.outer(xe, he) - np.outer(x, h)) / denom)


# -- majorization-minimization ------------------------------------------------


def mm_surrogate(z, theta1, theta2, opts: MMOptions, tau_x=0.0, tau_h=0.0, w=None) -> float:
    """Value of the smooth rank/sparsity surrogate at ``(Z, Theta1, Theta2)``."""
    val = 0.0
    for theta in (theta1, theta2):
        sign, logdet = np.linalg.slogdet(theta + opts.eps1 * np.eye(theta.shape[0]))
        val += logdet if sign > 0 else -np.inf
    if tau_x > 0:
        val += tau_x * float(np.sum(np.log(np.linalg.norm(z, axis=1) + opts.eps2)))
    if tau_h > 0:
        w = np.ones(z.shape[1]) if w is None else w
        val += tau_h * float(np.sum(w * np.log(np.linalg.norm(z, axis=0) + opts.eps3)))
    return val


def _mm_loop(op, y, rows, l, opts: MMOptions, tau_x=0.0, tau_h=0.0, w=None, extra_eq=None, noise_eps=0.0):
    w = np.ones(l) if w is None else w
    weights = MMWeights.initial(rows, l, tau_x, tau_h, w)
    iters = 1 if opts.surrogate == "nuclear" else opts.max_iters
    history: list[float] = []
    z_prev = None
    it = 0
    for it in range(1, iters + 1):
        prog = build_mm_sdp(op, y, weights, extra_eq, noise_eps or None, embedding=opts.embedding)
        res = solve(prog)
        if res.status in ("infeasible", "unbounded"):
            raise Infeasible(f"lifted subproblem reported {res.status}")
        if not res.ok:
            raise Infeasible(f"lifted subproblem stopped with status {res.status}")
        z, theta1, theta2 = mm_unpack(prog, res.z)
        history.append(mm_surrogate(z, theta1, theta2, opts, tau_x, tau_h, w))
        if z_prev is not None:
            denom = max(np.linalg.norm(z_prev), 1e-300)
            if np.linalg.norm(z - z_prev) / denom < opts.rel_tol:
                break
        z_prev = z
        weights = MMWeights(
            delta1=np.linalg.inv(theta1 + opts.eps1 * np.eye(rows)),
            delta2=np.linalg.inv(theta2 + opts.eps1 * np.eye(l)),
            a=1.0 / (np.linalg.norm(z, axis=1) + opts.eps2),
            b=1.0 / (np.linalg.norm(z, axis=0) + opts.eps3),
            w=w,
            tau_x=tau_x,
            tau_h=tau_h,
        )
    return z, it, history


def proportional_rows(rows: int, l: int, pairs) -> np.ndarray:
    """Rows ``c_i^T Z = 0`` in vec form for each coefficient vector ``c_i`` (length ``rows``)."""
    out = []
    for c in pairs:
        for k in range(l):
            row = np.zeros(rows * l)
            row[k * rows : (k + 1) * rows] = c
            out.append(row)
    return np.asarray(out).reshape(-1, rows * l)


def _side_rows_sparse(k_idx, x_k, rows):
    """``z_{k_i} x_{k_{i+1}} - z_{k_{i+1}} x_{k_i} = 0`` for consecutive known entries."""
    pairs = []
    for i in range(len(k_idx) - 1):
        c = np.zeros(rows)
        c[k_idx[i]] += x_k[i + 1]
        c[k_idx[i + 1]] -= x_k[i]
        pairs.append(c)
    return pairs


def _finalize(z, it, hist, x, h, y_hat, alpha=None) -> BlindResult:
    return BlindResult(
        z_hat=z,
        x_hat=x,
        h_hat=h,
        y_hat=y_hat,
        iterations=it,
        history=tuple(hist),
        singular_values=np.linalg.svd(z, compute_uv=False),
        alpha_hat=alpha,
    )


def _normalize(x, h):
    nx_ = np.linalg.norm(x)
    return x / nx_, h * nx_


def blind_recover(p: BlindProblem) -> BlindResult:
    """Joint input and filter recovery by logdet (or nuclear) MM over SDPs."""
    if p.dictionary is not None:
        return blind_recover_subspace(p)
    n, l = p.shift.n, p.l
    op_full = lifted_operator_p(p.shift, l)
    op = op_full[p.sampling.array]

    # known zero inputs remove whole rows of Z
    active = np.arange(n)
    k_idx, x_k = np.zeros(0, dtype=int), np.zeros(0)
    if p.n_known:
        zero = p.known.array[p.x_k == 0.0]
        active = np.setdiff1d(active, zero)
        nz_mask = p.x_k != 0.0
        k_idx, x_k = p.known.array[nz_mask], p.x_k[nz_mask]
    pos = {int(v): i for i, v in enumerate(active)}
    cols = (active[None, :] + n * np.arange(l)[:, None]).ravel()
    op_red = op[:, cols]
    rows = active.size
    extra = None
    if k_idx.size >= 2:
        extra = proportional_rows(rows, l, _side_rows_sparse([pos[int(k)] for k in k_idx], x_k, rows))

    z_red, it, hist = _mm_loop(op_red, p.y_m, rows, l, p.mm, p.tau_x, p.tau_h, p.weights, extra, p.eps)
    z = np.zeros((n, l))
    z[active] = z_red

    if p.n_known:
        x, h = rank_one_known_inputs(z, p.known, p.x_k)
    else:
        x, h = _normalize(*rank_one_plain(z))
        x, h = sign_convention(x, h)
    y_hat = op_full @ vec(np.outer(x, h))
    return _finalize(z, it, hist, x, h, y_hat)


def blind_recover_subspace(p: BlindProblem) -> BlindResult:
    """Blind recovery with inputs in the span of an input dictionary.

    The lifted unknown is ``W = alpha h^T`` with ``y_M = T_M vec(W)``; only the
    logdet rank surrogate is used.  Known inputs add the rows
    ``d_{k_i}^T W x_{k_{i+1}} = d_{k_{i+1}}^T W x_{k_i}``.
    """
    if p.dictionary is None:
        raise ValueError("subspace recovery needs an input dictionary")
    d = p.dictionary.d
    dim, l = d.shape[1], p.l
    t_full = lifted_operator_t(p.shift, p.dictionary, l)
    op = t_full[p.sampling.array]
    extra = None
    if p.n_known >= 2:
        k_idx = p.known.array
        pairs = [d[k_idx[i]] * p.x_k[i + 1] - d[k_idx[i + 1]] * p.x_k[i] for i in range(len(k_idx) - 1)]
        extra = proportional_rows(dim, l, pairs)

    w, it, hist = _mm_loop(op, p.y_m, dim, l, p.mm, 0.0, 0.0, None, extra, p.eps)
    if p.n_known:
        alpha, h = rank_one_subspace_known_inputs(w, p.dictionary, p.known, p.x_k)
    else:
        alpha, h = rank_one_plain(w)
        x_norm = np.linalg.norm(d @ alpha)
        alpha, h = sign_convention(alpha / x_norm, h * x_norm)
    y_hat = t_full @ vec(np.outer(alpha, h))
    return _finalize(w, it, hist, d @ alpha, h, y_hat, alpha=alpha)
