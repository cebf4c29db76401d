"""Sampling sets, column-coherence metrics and sampling-set search."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations, islice
from math import comb
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .errors import AllColumnsZero, TooLarge

EXHAUSTIVE_LIMIT = 2_000_000
SPARK_LIMIT = 100_000


@dataclass(frozen=True)
class SelectionSet:
    """Strictly increasing node indices in ``[0, n)``; acts as the selection matrix C."""

    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("selection indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise ValueError(f"selection indices must lie in [0, {self.n})")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int], n: int) -> "SelectionSet":
        return cls(tuple(sorted({int(i) for i in indices})), n)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)

    def matrix(self) -> np.ndarray:
        c = np.zeros((len(self), self.n))
        c[np.arange(len(self)), self.array] = 1.0
        return c

    def complement(self) -> "SelectionSet":
        chosen = set(self.indices)
        return SelectionSet(tuple(i for i in range(self.n) if i not in chosen), self.n)

    def to_json(self) -> str:
        return json.dumps(list(self.indices))

    @classmethod
    def from_json(cls, text: str, n: int) -> "SelectionSet":
        return cls(tuple(json.loads(text)), n)


@dataclass(frozen=True)
class CoherenceReport:
    rho: float
    xi: float
    reduced_columns: int


def coherence_rho(a: np.ndarray) -> CoherenceReport:
    """Averaged and worst-case normalized squared column inner products of ``a``.

    With ``Q = a^T a`` and the numerically zero columns removed,
    ``rho = sum_{i<j} q_ij^2/(q_ii q_jj) / (n_c (n_c - 1))`` and ``xi`` is the
    largest of those terms (the squared mutual coherence).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        raise ValueError("coherence of an empty matrix")
    total, worst, nc = _kernels.gram_coherence(a.T @ a)
    if nc < 2:
        raise AllColumnsZero(f"only {nc} nonzero column(s) remain")
    return CoherenceReport(rho=total / (nc * (nc - 1)), xi=worst, reduced_columns=a.shape[1] - nc)


def _pick(values: np.ndarray, candidates: np.ndarray) -> int:
    best = values.min()
    if not np.isfinite(best):
        return int(candidates[0])
    close = values <= best + _kernels.TIE_RTOL * abs(best)
    return int(candidates[np.flatnonzero(close)[0]])


def greedy_sample(
    a_full: np.ndarray,
    m: int,
    init: str = "exhaustive-pair",
    rng: Optional[np.random.Generator] = None,
) -> SelectionSet:
    """Grow a sampling set one node at a time, each step minimizing rho.

    Rows of ``a_full`` correspond to nodes (a filter matrix H or a lifted
    operator P).  The first two nodes come from an exhaustive pair search, or
    from ``rng`` when ``init='random'``.  Ties go to the lowest node index.
    """
    a_full = np.asarray(a_full, dtype=float)
    n = a_full.shape[0]
    if not 2 <= m <= n:
        raise ValueError(f"need 2 <= m <= {n}, got m={m}")
    if m == n:
        return SelectionSet(tuple(range(n)), n)
    if init == "exhaustive-pair":
        first, _ = _kernels.exhaustive_min_rho(a_full, 2)
        chosen = [int(i) for i in first]
    elif init == "random":
        rng = rng if rng is not None else np.random.default_rng()
        chosen = sorted(int(i) for i in rng.choice(n, size=2, replace=False))
    else:
        raise ValueError(f"unknown init {init!r}")
    q = a_full[chosen].T @ a_full[chosen]
    remaining = np.ones(n, dtype=bool)
    remaining[chosen] = False
    while len(chosen) < m:
        candidates = np.flatnonzero(remaining)
        scores = _kernels.candidate_rho(q, a_full, candidates)
        pick = _pick(scores, candidates)
        chosen.append(pick)
        remaining[pick] = False
        q = q + np.outer(a_full[pick], a_full[pick])
    return SelectionSet.of(chosen, n)


def exhaustive_sample(a_full: np.ndarray, m: int) -> SelectionSet:
    """Global rho minimizer over all size-``m`` row subsets (lexicographic ties)."""
    a_full = np.asarray(a_full, dtype=float)
    n = a_full.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    if comb(n, m) > EXHAUSTIVE_LIMIT:
        raise TooLarge(f"C({n}, {m}) = {comb(n, m)} subsets exceeds {EXHAUSTIVE_LIMIT}")
    if m == n:
        return SelectionSet(tuple(range(n)), n)
    best, _ = _kernels.exhaustive_min_rho(a_full, m)
    return SelectionSet.of(best, n)


def random_sample(n: int, m: int, rng: np.random.Generator) -> SelectionSet:
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= {n}, got m={m}")
    return SelectionSet.of(rng.choice(n, size=m, replace=False), n)


def spark_check(a: np.ndarray, s: int, chunk: int = 2048) -> bool:
    """True iff every ``2s``-column submatrix of ``a`` has full column rank.

    Rank is judged by ``sigma_min > 1e-8 sigma_max``.  When ``2s`` exceeds the
    column count, the whole matrix is checked instead.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rows, cols = a.shape
    k = min(2 * s, cols)
    if k < 1:
        raise ValueError("sparsity must be >= 1")
    if comb(cols, k) > SPARK_LIMIT:
        raise TooLarge(f"C({cols}, {k}) column subsets exceeds {SPARK_LIMIT}")
    if k > rows:
        return False
    combos = combinations(range(cols), k)
    while True:
        block = np.array(list(islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            return True
        sub = np.moveaxis(a[:, block], 1, 0)  # (chunk, rows, k)
        sv = np.linalg.svd(sub, compute_uv=False)
        if np.any(sv[:, -1] <= 1e-8 * sv[:, 0]):
            return False
