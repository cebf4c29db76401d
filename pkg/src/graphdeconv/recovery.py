"""Input recovery when the diffusing filter is known.

The observations are ``y_M = C_M H x`` (or ``C_M H D_x alpha`` for inputs
living in a dictionary subspace).  Recovery minimizes the l1 norm of the
input, optionally reweighted by the majorization of ``sum log(|x_n| + eps0)``,
subject to the observations and to any known input values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conic import build_weighted_l1, solve
from .errors import DimensionMismatch, Infeasible
from .graph import Dictionary, GraphFilter, GraphShift, filter_matrix
from .sampling import SelectionSet

EPS0 = 1e-3
MAX_ITERS = 10
REL_TOL = 1e-4
SUPPORT_RTOL = 1e-6


@dataclass(frozen=True)
class ObservationModel:
    """Observed outputs ``y_M`` on ``sampling``, optional known inputs and noise budget.

    ``eps`` bounds the squared residual ``||y_M - A z||^2``; zero means the
    observations are enforced exactly.
    """

    sampling: SelectionSet
    y_m: np.ndarray
    known: Optional[SelectionSet] = None
    x_k: Optional[np.ndarray] = None
    eps: float = 0.0

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y_m, dtype=float))
        if y.size != len(self.sampling):
            raise DimensionMismatch(f"{y.size} observations for {len(self.sampling)} sampled nodes")
        object.__setattr__(self, "y_m", y)
        if self.eps < 0:
            raise ValueError("noise budget must be nonnegative")
        if (self.known is None) != (self.x_k is None):
            raise ValueError("known inputs need both the index set and the values")
        if self.known is not None:
            xk = np.atleast_1d(np.asarray(self.x_k, dtype=float))
            if xk.size != len(self.known):
                raise DimensionMismatch("x_k length differs from the known set size")
            object.__setattr__(self, "x_k", xk)

    @property
    def n_known(self) -> int:
        return 0 if self.known is None else len(self.known)


@dataclass(frozen=True)
class KnownFilterProblem:
    shift: GraphShift
    filter: GraphFilter
    obs: ObservationModel
    dictionary: Optional[Dictionary] = None  # None means the sparse input model

    def __post_init__(self):
        if self.obs.sampling.n != self.shift.n:
            raise DimensionMismatch("sampling set does not live on the graph nodes")
        if self.dictionary is not None and self.dictionary.d.shape[0] != self.shift.n:
            raise DimensionMismatch("dictionary rows must match the node count")


@dataclass(frozen=True)
class LinearView:
    """``b = a @ z[free]`` with the entries outside ``free`` pinned to ``fixed``.

    This is the form every known-filter recovery is solved in; ``fixed`` is a
    full-length vector holding the known values (zeros on ``free``).
    """

    a: np.ndarray
    b: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    eps: float = 0.0

    @property
    def size(self) -> int:
        return self.fixed.size

    def embed(self, z_free: np.ndarray) -> np.ndarray:
        z = self.fixed.copy()
        z[self.free] = z_free
        return z


@dataclass(frozen=True)
class RecoveryResult:
    x_hat: np.ndarray
    y_hat: np.ndarray
    support_hat: tuple[int, ...]
    iterations: int
    history: tuple[float, ...]
    alpha_hat: Optional[np.ndarray] = field(default=None)

    def to_json_dict(self) -> dict:
        doc = {
            "x_hat": self.x_hat.tolist(),
            "y_hat": self.y_hat.tolist(),
            "support": list(self.support_hat),
            "iterations": self.iterations,
            "history": list(self.history),
        }
        if self.alpha_hat is not None:
            doc["alpha_hat"] = self.alpha_hat.tolist()
        return doc


# -- shared reweighted l1 core ----------------------------------------------


def log_surrogate(z: np.ndarray, eps0: float, weights=None) -> float:
    w = 1.0 if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * np.log(np.abs(z) + eps0)))


def reweighted_l1(
    a: np.ndarray,
    b: np.ndarray,
    eps: float = 0.0,
    base_weights=None,
    eps0: float = EPS0,
    max_iters: int = MAX_ITERS,
    rel_tol: float = REL_TOL,
) -> tuple[np.ndarray, int, list[float]]:
    """Majorization-minimization for ``min sum w_n log(|z_n| + eps0)`` s.t. ``a z = b``.

    Iteration one uses unit reweighting, i.e. the (weighted) l1 program.
    Returns ``(z, iterations, history)`` with the log-surrogate after each
    iteration.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = a.shape[1]
    base = np.ones(n) if base_weights is None else np.asarray(base_weights, dtype=float)
    reweight = np.ones(n)
    z_prev = None
    history: list[float] = []
    it = 0
    for it in range(1, max_iters + 1):
        prog = build_weighted_l1(a, b, base * reweight, noise_eps=eps if eps > 0 else None)
        res = solve(prog)
        if res.status in ("infeasible", "unbounded"):
            raise Infeasible(f"l1 subproblem reported {res.status}")
        if not res.ok:
            raise Infeasible(f"l1 subproblem stopped with status {res.status}")
        z = res.z[:n]
        history.append(log_surrogate(z, eps0, base))
        if z_prev is not None:
            denom = max(np.linalg.norm(z_prev), 1e-300)
            if np.linalg.norm(z - z_prev) / denom < rel_tol:
                break
        z_prev = z
        reweight = 1.0 / (np.abs(z) + eps0)
    return z, it, history


# -- problem transforms -----------------------------------------------------


def _base_view(p: KnownFilterProblem) -> tuple[LinearView, np.ndarray]:
    """Linear view over x (or alpha) before known inputs are used, plus H."""
    h_full = filter_matrix(p.shift, p.filter)
    a = h_full[p.obs.sampling.array]
    if p.dictionary is not None:
        a = a @ p.dictionary.d
    size = a.shape[1]
    return LinearView(a, p.obs.y_m.copy(), np.arange(size), np.zeros(size), p.obs.eps), h_full


def reduce_known_inputs(p: KnownFilterProblem) -> LinearView:
    """Eliminate the known input entries ``x_K`` from the problem.

    The variable becomes ``x_{K^c}``, the matrix ``H_M C_{K^c}^T`` and the
    observations ``y_M - H_M C_K^T x_K``.  Without known inputs this is the
    identity transform.
    """
    if p.dictionary is not None:
        raise ValueError("known-input elimination applies to the sparse input model")
    view, _ = _base_view(p)
    if p.obs.known is None or len(p.obs.known) == 0:
        return view
    k = p.obs.known.array
    free = p.obs.known.complement().array
    fixed = np.zeros(view.size)
    fixed[k] = p.obs.x_k
    b = view.b - view.a[:, k] @ p.obs.x_k
    return LinearView(view.a[:, free], b, free, fixed, view.eps)


def subspace_input_wrap(p: KnownFilterProblem) -> LinearView:
    """Rewrite the problem over the dictionary coefficients (matrix ``H_M D_x``).

    Known input values become the linear constraints ``D_K alpha = x_K``,
    appended to the observation rows.
    """
    if p.dictionary is None:
        raise DimensionMismatch("subspace wrap needs an input dictionary")
    view, _ = _base_view(p)
    if p.obs.known is None or len(p.obs.known) == 0:
        return view
    if view.eps > 0:
        raise ValueError("known inputs with a noise budget are only supported for sparse inputs")
    d_k = p.dictionary.d[p.obs.known.array]
    a = np.vstack([view.a, d_k])
    b = np.concatenate([view.b, p.obs.x_k])
    return LinearView(a, b, view.free, view.fixed, view.eps)


def _view_for(p: KnownFilterProblem) -> tuple[LinearView, np.ndarray]:
    _, h_full = _base_view(p)
    view = reduce_known_inputs(p) if p.dictionary is None else subspace_input_wrap(p)
    return view, h_full


# -- recovery ---------------------------------------------------------------


def localize_support(result, threshold: Optional[float] = None) -> tuple[int, ...]:
    """Indices with ``|x_n| > threshold`` (default ``1e-6 ||x||_inf``)."""
    x = np.asarray(result.x_hat if hasattr(result, "x_hat") else result, dtype=float)
    peak = np.abs(x).max(initial=0.0)
    if peak == 0.0:
        return ()
    thr = SUPPORT_RTOL * peak if threshold is None else threshold
    return tuple(int(i) for i in np.flatnonzero(np.abs(x) > thr))


def _solve_view(view: LinearView, eps0, max_iters, rel_tol):
    if view.free.size == 0:
        resid = float(np.sum(view.b**2))
        if resid > max(view.eps, 1e-18 + 1e-16 * float(np.sum(view.fixed**2))):
            raise Infeasible("known inputs do not reproduce the observations")
        return view.fixed.copy(), 1, [log_surrogate(view.fixed, eps0)]
    z_free, it, hist = reweighted_l1(view.a, view.b, view.eps, None, eps0, max_iters, rel_tol)
    z = view.embed(z_free)
    # history on the full variable so known entries add a constant offset only
    offset = log_surrogate(view.fixed[np.setdiff1d(np.arange(view.size), view.free)], eps0)
    return z, it, [h + offset for h in hist]


def _finish(p: KnownFilterProblem, h_full, z, it, hist) -> RecoveryResult:
    alpha = None if p.dictionary is None else z
    x = z if alpha is None else p.dictionary.d @ alpha
    return RecoveryResult(
        x_hat=x,
        y_hat=h_full @ x,
        support_hat=localize_support(z),
        iterations=it,
        history=tuple(hist),
        alpha_hat=alpha,
    )


def recover_reweighted(
    p: KnownFilterProblem,
    eps0: float = EPS0,
    max_iters: int = MAX_ITERS,
    rel_tol: float = REL_TOL,
) -> RecoveryResult:
    """Reweighted l1 recovery of the input (log surrogate of the l0 norm)."""
    view, h_full = _view_for(p)
    z, it, hist = _solve_view(view, eps0, max_iters, rel_tol)
    return _finish(p, h_full, z, it, hist)


def recover_l1(p: KnownFilterProblem, eps0: float = EPS0) -> RecoveryResult:
    """Single l1 minimization; ``history`` still reports the log surrogate."""
    return recover_reweighted(p, eps0=eps0, max_iters=1)
