"""Graph shift operators, graph filters and the lifted filtering operators.

A graph filter is a polynomial in the shift, ``H = sum_l h[l] S**l``.  With
``S = V diag(lam) U`` (``U = V^{-1}``) the filter output also reads
``y = P vec(x h^T)`` where ``P = V (Psi^T kr U^T)^T``, ``Psi`` is the
Vandermonde matrix of the eigenvalues and ``kr`` the column-wise Khatri-Rao
product.  ``vec`` stacks columns throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.linalg import khatri_rao

from .errors import DimensionMismatch, GenerationFailed, NotDiagonalizable

RESIDUAL_TOL = 1e-10
COND_LIMIT = 1e12
MAX_GRAPH_ATTEMPTS = 100


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def vec(a: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape(rows, cols, order="F")


@dataclass(frozen=True)
class GraphShift:
    """Real N x N shift with (optionally) its eigendecomposition.

    ``v``, ``lam`` and ``u`` are ``None`` for vertex-only shifts (e.g. the
    directed cycle, whose spectrum is complex); such shifts support
    filtering but not the spectral operators.
    """

    s: np.ndarray
    v: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    symmetric: bool = False

    @property
    def n(self) -> int:
        return self.s.shape[0]

    @property
    def has_spectrum(self) -> bool:
        return self.v is not None

    def require_spectrum(self) -> None:
        if not self.has_spectrum:
            raise NotDiagonalizable("shift was built without an eigendecomposition")

    def edges(self) -> list[tuple[int, int]]:
        """Directed edge list ``(i, j)`` for every off-diagonal ``S[j, i] != 0``."""
        dst, src = np.nonzero(self.s)
        return sorted((int(i), int(j)) for j, i in zip(dst, src) if i != j)


@dataclass(frozen=True)
class GraphFilter:
    h: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if h.ndim != 1 or h.size < 1:
            raise ValueError("filter needs at least one coefficient")
        if not np.all(np.isfinite(h)):
            raise ValueError("filter coefficients must be finite")
        object.__setattr__(self, "h", _frozen(h))

    @property
    def length(self) -> int:
        return self.h.size

    @property
    def order(self) -> int:
        return self.h.size - 1


@dataclass(frozen=True)
class Dictionary:
    """Dense dictionary; ``kind='input'`` is N x D_x, ``kind='filter'`` is L x D_h."""

    d: np.ndarray
    kind: Literal["input", "filter"] = "input"

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2:
            raise DimensionMismatch("dictionary must be a matrix")
        if not np.all(np.isfinite(d)):
            raise ValueError("dictionary entries must be finite")
        if np.any(np.linalg.norm(d, axis=0) <= 1e-12):
            raise ValueError("dictionary has a zero column")
        if self.kind not in ("input", "filter"):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        object.__setattr__(self, "d", _frozen(d))

    @property
    def size(self) -> int:
        return self.d.shape[1]


@dataclass(frozen=True)
class DiffusedSignal:
    x: np.ndarray
    y: np.ndarray
    support: tuple[int, ...]
    alpha: Optional[np.ndarray] = field(default=None)


def shift_from_matrix(
    s, edges: Optional[Sequence[tuple[int, int]]] = None, decompose: bool = True
) -> GraphShift:
    """Wrap a shift matrix, validating its sparsity against ``edges``.

    With ``decompose=False`` no spectrum is computed, which is the only way
    to filter on shifts with complex eigenvalues.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"shift must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("shift has non-finite entries")
    if edges is not None:
        allowed = np.eye(s.shape[0], dtype=bool)
        for i, j in edges:
            allowed[j, i] = True
        if np.any((s != 0) & ~allowed):
            raise ValueError("shift has nonzeros outside the edge set")
    if decompose:
        return eigendecompose(s)
    return GraphShift(s=_frozen(s), symmetric=bool(np.array_equal(s, s.T)))


def eigendecompose(s) -> GraphShift:
    """Diagonalize ``s`` with eigenvalues sorted in non-increasing order.

    Symmetric matrices use an orthogonal decomposition (``U = V^T``).
    Complex spectra, ill-conditioned eigenvector matrices and reconstruction
    residuals above 1e-10 (relative) raise :class:`NotDiagonalizable`.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"shift must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("shift has non-finite entries")
    symmetric = bool(np.array_equal(s, s.T))
    if symmetric:
        lam, v = np.linalg.eigh(s)
        order = np.argsort(-lam, kind="stable")
        lam, v = lam[order], v[:, order]
        u = v.T.copy()
    else:
        lam_c, v_c = np.linalg.eig(s)
        scale = max(1.0, np.abs(lam_c).max(initial=0.0))
        if np.any(np.abs(lam_c.imag) > 1e-10 * scale):
            raise NotDiagonalizable("shift has complex eigenvalues")
        lam, v = lam_c.real, v_c.real
        order = np.argsort(-lam, kind="stable")
        lam, v = lam[order], v[:, order]
        if np.linalg.cond(v) > COND_LIMIT:
            raise NotDiagonalizable("eigenvector matrix is ill-conditioned")
        u = np.linalg.inv(v)
    norm_s = np.linalg.norm(s)
    resid = np.linalg.norm(s - (v * lam) @ u)
    if resid > RESIDUAL_TOL * max(norm_s, 1.0):
        raise NotDiagonalizable(f"reconstruction residual {resid:.2e} too large")
    return GraphShift(s=_frozen(s), v=_frozen(v), lam=_frozen(lam), u=_frozen(u), symmetric=symmetric)


def vandermonde(shift: GraphShift, l: int) -> np.ndarray:
    """N x L matrix with ``Psi[i, k] = lam[i] ** k``."""
    if l < 1:
        raise ValueError("filter length must be >= 1")
    shift.require_spectrum()
    return np.vander(shift.lam, l, increasing=True)


def _coeffs(filt) -> np.ndarray:
    return filt.h if isinstance(filt, GraphFilter) else np.atleast_1d(np.asarray(filt, dtype=float))


def apply_filter(shift: GraphShift, filt, x) -> np.ndarray:
    """``sum_l h[l] x^[l]`` with ``x^[l] = S x^[l-1]`` (powers of S never formed)."""
    h = _coeffs(filt)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != shift.n:
        raise DimensionMismatch(f"signal has length {x.shape[0]}, graph has {shift.n} nodes")
    xl = x
    y = h[0] * xl
    for hl in h[1:]:
        xl = shift.s @ xl
        y = y + hl * xl
    return y


def filter_matrix(shift: GraphShift, filt) -> np.ndarray:
    """Dense ``H = sum_l h[l] S**l`` via Horner's rule."""
    h = _coeffs(filt)
    eye = np.eye(shift.n)
    hm = h[-1] * eye
    for hl in h[-2::-1]:
        hm = hm @ shift.s + hl * eye
    return hm


def shifted_inputs(shift: GraphShift, x, l: int) -> np.ndarray:
    """N x L matrix ``[x, Sx, ..., S^{L-1} x]``; equals ``P (I_L kron x)``."""
    x = np.asarray(x, dtype=float)
    cols = [x]
    for _ in range(l - 1):
        cols.append(shift.s @ cols[-1])
    return np.stack(cols, axis=1)


def lifted_operator_p(shift: GraphShift, l: int) -> np.ndarray:
    """N x NL matrix ``P`` with ``P vec(x h^T) = H x``."""
    psi = vandermonde(shift, l)
    return shift.v @ khatri_rao(psi.T, shift.u.T).T


def lifted_operator_t(shift: GraphShift, dictionary: Dictionary, l: int) -> np.ndarray:
    """N x (D_x L) matrix ``T`` with ``T vec(alpha h^T) = H D_x alpha``."""
    d = dictionary.d if isinstance(dictionary, Dictionary) else np.asarray(dictionary, dtype=float)
    if d.ndim != 2 or d.shape[0] != shift.n:
        raise DimensionMismatch(f"dictionary needs {shift.n} rows, got shape {d.shape}")
    psi = vandermonde(shift, l)
    return shift.v @ khatri_rao(psi.T, (shift.u @ d).T).T


# -- random generation -------------------------------------------------------

GRAPH_DEFAULTS = {
    "er": {"p": 0.1},
    "ba": {"m0": 7, "m": 3},
    "ws": {"k": 6, "beta": 1.0},
}


def _attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(attempt,)).generate_state(1)[0])


def _draw_nx_graph(model: str, n: int, params: dict, seed: int) -> nx.Graph:
    if model == "er":
        return nx.gnp_random_graph(n, params["p"], seed=seed)
    if model == "ba":
        m0, m = int(params["m0"]), int(params["m"])
        if n <= m0:
            return nx.cycle_graph(n)
        return nx.barabasi_albert_graph(n, m, seed=seed, initial_graph=nx.cycle_graph(m0))
    if model == "ws":
        return nx.watts_strogatz_graph(n, int(params["k"]), params["beta"], seed=seed)
    raise ValueError(f"unknown graph model {model!r}")


def adjacency(g: nx.Graph, n: int) -> np.ndarray:
    return nx.to_numpy_array(g, nodelist=range(n), weight=None)


def generate_graph(model: str, n: int, seed: int, **params) -> GraphShift:
    """Undirected random graph (``er``, ``ba`` or ``ws``) as an adjacency shift.

    Deterministic in ``(model, n, params, seed)``.  Draws whose adjacency
    cannot be diagonalized are redrawn with derived seeds.
    """
    model = model.lower()
    if model not in GRAPH_DEFAULTS:
        raise ValueError(f"unknown graph model {model!r}")
    full = {**GRAPH_DEFAULTS[model], **params}
    for attempt in range(MAX_GRAPH_ATTEMPTS):
        g = _draw_nx_graph(model, n, full, _attempt_seed(seed, attempt))
        try:
            return eigendecompose(adjacency(g, n))
        except NotDiagonalizable:
            continue
    raise GenerationFailed(f"{model} graph not diagonalizable after {MAX_GRAPH_ATTEMPTS} draws")


def random_dictionary(n: int, d: int, rng: np.random.Generator, kind: str = "input") -> Dictionary:
    """I.i.d. Gaussian dictionary scaled to unit Frobenius norm."""
    mat = rng.standard_normal((n, d))
    return Dictionary(mat / np.linalg.norm(mat), kind=kind)


def _unit_gaussian(rng: np.random.Generator, k: int) -> np.ndarray:
    v = rng.standard_normal(k)
    return v / np.linalg.norm(v)


def generate_problem_instance(
    shift: GraphShift,
    l: int,
    s_x: int,
    seed,
    model: Literal["sparse", "subspace"] = "sparse",
    dictionary: Optional[Dictionary] = None,
    s_h: Optional[int] = None,
) -> tuple[DiffusedSignal, GraphFilter]:
    """Draw a sparse (or subspace) input and a unit-norm filter, then diffuse.

    The input has ``s_x`` nonzeros on a uniformly drawn support (for the
    subspace model the support lives on the dictionary atoms).  The filter
    has its ``s_h`` leading taps active (all ``l`` by default).  Nonzero
    values are Gaussian, normalized to unit Euclidean norm.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s_h = l if s_h is None else s_h
    if not 1 <= s_h <= l:
        raise ValueError("s_h must lie in [1, l]")
    if model == "sparse":
        if not 0 < s_x <= shift.n:
            raise ValueError("s_x must lie in (0, N]")
        support = np.sort(rng.choice(shift.n, size=s_x, replace=False))
        x = np.zeros(shift.n)
        x[support] = _unit_gaussian(rng, s_x)
        alpha = None
    elif model == "subspace":
        if dictionary is None:
            raise ValueError("subspace model needs an input dictionary")
        if dictionary.d.shape[0] != shift.n:
            raise DimensionMismatch("dictionary rows must match the node count")
        dx = dictionary.size
        if not 0 < s_x <= dx:
            raise ValueError("s_x must lie in (0, D_x]")
        support = np.sort(rng.choice(dx, size=s_x, replace=False))
        alpha = np.zeros(dx)
        alpha[support] = _unit_gaussian(rng, s_x)
        x = dictionary.d @ alpha
    else:
        raise ValueError(f"unknown input model {model!r}")
    h = np.zeros(l)
    h[:s_h] = _unit_gaussian(rng, s_h)
    filt = GraphFilter(h)
    y = apply_filter(shift, filt, x)
    sig = DiffusedSignal(
        x=_frozen(x),
        y=_frozen(y),
        support=tuple(int(i) for i in support),
        alpha=None if alpha is None else _frozen(alpha),
    )
    return sig, filt
