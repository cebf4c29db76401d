"""Inner loops of the sampling-set searches.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with the same signature and results.  The numba path is used when
numba imports and ``GRAPHDECONV_NO_NUMBA`` is unset (or ``0``); ``use_backend``
switches at runtime.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from itertools import combinations, islice

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


ZERO_COL_TOL = 1e-12
TIE_RTOL = 1e-12


def _env_backend() -> str:
    flag = os.environ.get("GRAPHDECONV_NO_NUMBA", "").strip().lower()
    if not HAVE_NUMBA or flag not in ("", "0", "false", "no"):
        return "numpy"
    return "numba"


BACKEND = _env_backend()


def set_backend(name: str) -> None:
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    BACKEND = name


@contextmanager
def use_backend(name: str):
    old = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(old)


# -- coherence of a Gram matrix -------------------------------------------


@njit(cache=True)
def _gram_coherence_nb(q):
    n = q.shape[0]
    dmax = 0.0
    for i in range(n):
        if q[i, i] > dmax:
            dmax = q[i, i]
    thr = (ZERO_COL_TOL * ZERO_COL_TOL) * dmax
    keep = np.empty(n, dtype=np.int64)
    nc = 0
    for i in range(n):
        if q[i, i] > thr and q[i, i] > 0.0:
            keep[nc] = i
            nc += 1
    total = 0.0
    worst = 0.0
    for a in range(nc):
        i = keep[a]
        for b in range(a + 1, nc):
            j = keep[b]
            t = q[i, j] * q[i, j] / (q[i, i] * q[j, j])
            total += t
            if t > worst:
                worst = t
    return total, worst, nc


def _gram_coherence_np(q):
    d = np.diag(q)
    dmax = d.max(initial=0.0)
    keep = np.flatnonzero((d > ZERO_COL_TOL**2 * dmax) & (d > 0.0))
    nc = keep.size
    if nc < 2:
        return 0.0, 0.0, nc
    qk = q[np.ix_(keep, keep)]
    dk = d[keep]
    terms = qk * qk / np.outer(dk, dk)
    iu = np.triu_indices(nc, 1)
    vals = terms[iu]
    return float(vals.sum()), float(vals.max()), nc


def gram_coherence(q: np.ndarray) -> tuple[float, float, int]:
    """Return ``(sum_{i<j} q_ij^2/(q_ii q_jj), max of the same, n_kept)``.

    Columns whose norm is below 1e-12 of the largest column norm are dropped.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    if BACKEND == "numba":
        total, worst, nc = _gram_coherence_nb(q)
        return float(total), float(worst), int(nc)
    return _gram_coherence_np(q)


# -- greedy step: rho of every candidate extension ------------------------


@njit(cache=True)
def _candidate_rho_nb(q, rows, candidates):
    n = q.shape[0]
    out = np.empty(candidates.shape[0])
    diag = np.empty(n)
    keep = np.empty(n, dtype=np.int64)
    for c in range(candidates.shape[0]):
        r = rows[candidates[c]]
        dmax = 0.0
        for i in range(n):
            diag[i] = q[i, i] + r[i] * r[i]
            if diag[i] > dmax:
                dmax = diag[i]
        thr = (ZERO_COL_TOL * ZERO_COL_TOL) * dmax
        nc = 0
        for i in range(n):
            if diag[i] > thr and diag[i] > 0.0:
                keep[nc] = i
                nc += 1
        if nc < 2:
            out[c] = np.inf
            continue
        total = 0.0
        for a in range(nc):
            i = keep[a]
            ri = r[i]
            di = diag[i]
            for b in range(a + 1, nc):
                j = keep[b]
                v = q[i, j] + ri * r[j]
                total += v * v / (di * diag[j])
        out[c] = total / (nc * (nc - 1))
    return out


def _candidate_rho_np(q, rows, candidates, chunk=16):
    out = np.empty(candidates.size)
    n = q.shape[0]
    iu = np.triu_indices(n, 1)
    for start in range(0, candidates.size, chunk):
        idx = candidates[start : start + chunk]
        r = rows[idx]
        qc = q[None, :, :] + r[:, :, None] * r[:, None, :]
        diag = np.einsum("cii->ci", qc)
        dmax = diag.max(axis=1, keepdims=True)
        keep = (diag > ZERO_COL_TOL**2 * dmax) & (diag > 0.0)
        nc = keep.sum(axis=1)
        safe = np.where(keep, diag, 1.0)
        terms = qc * qc / (safe[:, :, None] * safe[:, None, :])
        terms *= keep[:, :, None] & keep[:, None, :]
        total = terms[:, iu[0], iu[1]].sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(nc >= 2, total / (nc * (nc - 1.0)), np.inf)
        out[start : start + idx.size] = rho
    return out


def candidate_rho(q: np.ndarray, rows: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """rho of ``Q + a_r a_r^T`` for every candidate row index ``r``.

    Candidates leaving fewer than two nonzero columns score ``inf``.
    """
    q = np.ascontiguousarray(q, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    candidates = np.ascontiguousarray(candidates, dtype=np.int64)
    if BACKEND == "numba":
        return _candidate_rho_nb(q, rows, candidates)
    return _candidate_rho_np(q, rows, candidates)


# -- exhaustive subset search ---------------------------------------------


@njit(cache=True)
def _subset_rho_small_nb(rows, idx, g, diag):
    # rho of the row subset via the m x m frame operator of the normalized
    # columns: sum_{i<j} (u_i . u_j)^2 = (||sum_i u_i u_i^T||_F^2 - n_c) / 2
    m = idx.shape[0]
    n = rows.shape[1]
    dmax = 0.0
    for i in range(n):
        s = 0.0
        for k in range(m):
            v = rows[idx[k], i]
            s += v * v
        diag[i] = s
        if s > dmax:
            dmax = s
    thr = (ZERO_COL_TOL * ZERO_COL_TOL) * dmax
    for a in range(m):
        for b in range(m):
            g[a, b] = 0.0
    nc = 0
    for i in range(n):
        if diag[i] > thr and diag[i] > 0.0:
            nc += 1
            inv = 1.0 / diag[i]
            for a in range(m):
                va = rows[idx[a], i] * inv
                for b in range(m):
                    g[a, b] += va * rows[idx[b], i]
    if nc < 2:
        return np.inf
    fro = 0.0
    for a in range(m):
        for b in range(m):
            fro += g[a, b] * g[a, b]
    total = 0.5 * (fro - nc)
    if total < 0.0:
        total = 0.0
    return total / (nc * (nc - 1))


@njit(cache=True)
def _exhaustive_nb(rows, m):
    nrows, n = rows.shape
    idx = np.arange(m)
    small = m * m < n
    partial = np.zeros((1 if small else m + 1, n, n))
    g = np.empty((m, m))
    best_val = np.inf
    best = idx.copy()
    diag = np.empty(n)
    keep = np.empty(n, dtype=np.int64)
    depth = 0  # partial[k] holds the Gram of the first k chosen rows
    while True:
        if small:
            val = _subset_rho_small_nb(rows, idx, g, diag)
        else:
            for k in range(depth, m):
                r = rows[idx[k]]
                for i in range(n):
                    for j in range(n):
                        partial[k + 1, i, j] = partial[k, i, j] + r[i] * r[j]
            q = partial[m]
            dmax = 0.0
            for i in range(n):
                diag[i] = q[i, i]
                if diag[i] > dmax:
                    dmax = diag[i]
            thr = (ZERO_COL_TOL * ZERO_COL_TOL) * dmax
            nc = 0
            for i in range(n):
                if diag[i] > thr and diag[i] > 0.0:
                    keep[nc] = i
                    nc += 1
            val = np.inf
            if nc >= 2:
                total = 0.0
                for a in range(nc):
                    i = keep[a]
                    for b in range(a + 1, nc):
                        j = keep[b]
                        total += q[i, j] * q[i, j] / (diag[i] * diag[j])
                val = total / (nc * (nc - 1))
        # first finite value always wins, later ones need a strict margin
        if val < np.inf and (best_val == np.inf or val < best_val - TIE_RTOL * abs(best_val)):
            best_val = val
            best[:] = idx
        # advance to the next combination in lexicographic order
        k = m - 1
        while k >= 0 and idx[k] == nrows - m + k:
            k -= 1
        if k < 0:
            break
        idx[k] += 1
        for t in range(k + 1, m):
            idx[t] = idx[t - 1] + 1
        depth = k
    return best, best_val


def _block_rho_np(sub):
    """rho of every row subset in ``sub`` (chunk, m, n)."""
    c, m, n = sub.shape
    diag = np.einsum("cki,cki->ci", sub, sub)
    dmax = diag.max(axis=1, keepdims=True)
    keep = (diag > ZERO_COL_TOL**2 * dmax) & (diag > 0.0)
    nc = keep.sum(axis=1)
    inv = np.where(keep, 1.0 / np.where(keep, diag, 1.0), 0.0)
    if m * m < n:
        g = np.einsum("cki,cli,ci->ckl", sub, sub, inv)
        total = np.maximum(0.5 * (np.einsum("ckl,ckl->c", g, g) - nc), 0.0)
    else:
        q = np.einsum("cki,ckj->cij", sub, sub)
        terms = q * q * inv[:, :, None] * inv[:, None, :]
        iu = np.triu_indices(n, 1)
        total = terms[:, iu[0], iu[1]].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nc >= 2, total / (nc * (nc - 1.0)), np.inf)


def _exhaustive_np(rows, m, chunk=4096):
    nrows, n = rows.shape
    best_val = np.inf
    best = None
    combos = combinations(range(nrows), m)
    while True:
        block = np.array(list(islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        vals = _block_rho_np(rows[block])
        for c in range(vals.size):
            if vals[c] < np.inf and (best is None or vals[c] < best_val - TIE_RTOL * abs(best_val)):
                best_val = float(vals[c])
                best = block[c].copy()
    if best is None:
        best = np.arange(m)
    return best, best_val


def exhaustive_min_rho(rows: np.ndarray, m: int) -> tuple[np.ndarray, float]:
    """Lexicographically first size-``m`` row subset minimizing rho."""
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if BACKEND == "numba":
        best, val = _exhaustive_nb(rows, int(m))
        return np.asarray(best), float(val)
    return _exhaustive_np(rows, int(m))
