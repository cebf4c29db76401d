"""Filter identification when the input is known.

With a known input ``x`` the sampled output is linear in the taps:
``y_M = C_M [x, Sx, ..., S^{L-1} x] h``.  Sparse filters are found by
(weighted, reweighted) l1 minimization; filters living in a dictionary
subspace ``h = D_h alpha_h`` by a least-squares solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, Infeasible, ZeroInput
from .graph import Dictionary, GraphShift, shifted_inputs
from .recovery import EPS0, MAX_ITERS, REL_TOL, reweighted_l1
from .sampling import SelectionSet

RANK_RTOL = 1e-10


def exponential_weights(l_len: int, beta: float) -> np.ndarray:
    """``w_l = (1 - exp(-beta l)) / (1 - exp(-beta L))`` for ``l = 1..L``.

    Entry ``l - 1`` weights tap ``h_{l-1}``.  Small ``beta`` approaches the
    linear ramp ``l / L``; large ``beta`` makes all weights close to one.
    """
    if l_len < 1:
        raise ValueError("filter length must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    l = np.arange(1, l_len + 1, dtype=float)
    return np.expm1(-beta * l) / np.expm1(-beta * l_len)


@dataclass(frozen=True)
class KnownInputProblem:
    """Known input ``x`` with outputs ``y_m`` observed on ``sampling``.

    Give ``l`` (and optionally ``weights``) for the sparse filter model, or
    ``dictionary`` (a filter dictionary, L x D_h) for the subspace model.
    """

    shift: GraphShift
    x: np.ndarray
    sampling: SelectionSet
    y_m: np.ndarray
    l: Optional[int] = None
    weights: Optional[np.ndarray] = None
    dictionary: Optional[Dictionary] = None
    sparse_alpha: bool = False
    eps: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.atleast_1d(np.asarray(self.y_m, dtype=float))
        if x.size != self.shift.n:
            raise DimensionMismatch("input length differs from the node count")
        if y.size != len(self.sampling):
            raise DimensionMismatch("one observation per sampled node is required")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y_m", y)
        if self.dictionary is not None:
            if self.dictionary.kind != "filter":
                raise ValueError("subspace filters need a filter dictionary")
            object.__setattr__(self, "l", self.dictionary.d.shape[0])
        if self.l is None or self.l < 1:
            raise ValueError("filter length must be >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.size != self.l or np.any(w <= 0):
                raise ValueError("weights must be positive, one per tap")
            object.__setattr__(self, "weights", w)

    def operator(self) -> np.ndarray:
        """``C_M [x, Sx, ..., S^{L-1} x]`` (M x L)."""
        return shifted_inputs(self.shift, self.x, self.l)[self.sampling.array]


@dataclass(frozen=True)
class FilterEstimate:
    h_hat: np.ndarray
    y_hat: np.ndarray
    rank_status: str  # "full" or "deficient"
    history: tuple[float, ...] = ()
    iterations: int = 1
    alpha_h_hat: Optional[np.ndarray] = field(default=None)

    def to_json_dict(self) -> dict:
        doc = {
            "h_hat": self.h_hat.tolist(),
            "y_hat": self.y_hat.tolist(),
            "rank_status": self.rank_status,
            "history": list(self.history),
            "iterations": self.iterations,
        }
        if self.alpha_h_hat is not None:
            doc["alpha_h_hat"] = self.alpha_h_hat.tolist()
        return doc


def _rank_status(a: np.ndarray) -> str:
    if a.size == 0:
        return "deficient"
    sv = np.linalg.svd(a, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    return "full" if rank == a.shape[1] else "deficient"


def _check_input(p: KnownInputProblem) -> None:
    if np.linalg.norm(p.x) < 1e-12:
        raise ZeroInput("the known input is (numerically) zero")


def _estimate(p: KnownInputProblem, h: np.ndarray, **kw) -> FilterEstimate:
    y_hat = shifted_inputs(p.shift, p.x, p.l) @ h
    return FilterEstimate(h_hat=h, y_hat=y_hat, **kw)


def identify_sparse_filter(
    p: KnownInputProblem,
    eps0: float = EPS0,
    max_iters: int = MAX_ITERS,
    rel_tol: float = REL_TOL,
    surrogate: str = "log",
) -> FilterEstimate:
    """Minimize ``sum_l w_l a_l |h_l|`` subject to the observations.

    ``surrogate='l1'`` solves the weighted l1 program once; ``'log'`` runs the
    reweighting loop with ``a_l = 1/(|h_l| + eps0)``.
    """
    _check_input(p)
    if surrogate not in ("l1", "log"):
        raise ValueError(f"unknown surrogate {surrogate!r}")
    a = p.operator()
    iters = 1 if surrogate == "l1" else max_iters
    h, it, hist = reweighted_l1(a, p.y_m, p.eps, p.weights, eps0, iters, rel_tol)
    return _estimate(p, h, rank_status=_rank_status(a), history=tuple(hist), iterations=it)


def identify_subspace_filter(
    p: KnownInputProblem,
    eps0: float = EPS0,
    max_iters: int = MAX_ITERS,
    rel_tol: float = REL_TOL,
) -> FilterEstimate:
    """Estimate ``alpha_h`` from ``y_M = C_M [x, ..., S^{L-1}x] D_h alpha_h``.

    Dense coefficients use the minimum-norm least-squares solution, exact when
    the system has full column rank and is consistent.  A rank-deficient
    system is flagged in ``rank_status`` rather than raised.  With
    ``sparse_alpha`` the coefficients come from reweighted l1 (uniform weights).
    """
    if p.dictionary is None:
        raise ValueError("subspace identification needs a filter dictionary")
    _check_input(p)
    a = p.operator() @ p.dictionary.d
    status = _rank_status(a)
    if p.sparse_alpha:
        alpha, it, hist = reweighted_l1(a, p.y_m, p.eps, None, eps0, max_iters, rel_tol)
    else:
        alpha, *_ = np.linalg.lstsq(a, p.y_m, rcond=None)
        resid = float(np.sum((a @ alpha - p.y_m) ** 2))
        limit = p.eps if p.eps > 0 else 1e-16 * max(1.0, float(np.sum(p.y_m**2))) * 1e4
        if resid > limit:
            raise Infeasible(f"observations are not reproducible by the filter subspace (residual {resid:.3g})")
        it, hist = 1, []
    h = p.dictionary.d @ alpha
    return _estimate(p, h, rank_status=status, history=tuple(hist), iterations=it, alpha_h_hat=alpha)
