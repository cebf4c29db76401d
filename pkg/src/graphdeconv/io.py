"""File formats: edge lists, MatrixMarket shifts, vectors and observation files.

Floating-point values are written with 17 significant digits so they read
back bit-for-bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigError, DimensionMismatch
from .graph import GraphShift, shift_from_matrix
from .sampling import SelectionSet

EDGE_HEADER = ["src", "dst", "weight"]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_edge_list(path, shift_or_matrix) -> None:
    """Write every nonzero ``S[dst, src]`` as a ``src,dst,weight`` row (path or open file)."""
    s = shift_or_matrix.s if isinstance(shift_or_matrix, GraphShift) else np.asarray(shift_or_matrix)
    dst, src = np.nonzero(s)
    order = np.lexsort((dst, src))

    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for i in order:
            w.writerow([int(src[i]), int(dst[i]), _fmt(s[dst[i], src[i]])])

    if hasattr(path, "write"):
        dump(path)
    else:
        with open(path, "w", newline="") as fh:
            dump(fh)


def read_edge_list(path, n: Optional[int] = None) -> np.ndarray:
    """Shift matrix from an edge-list CSV; edge ``(src, dst, w)`` sets ``S[dst, src] = w``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EDGE_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(EDGE_HEADER)}")
        rows = [r for r in reader if r]
    src = np.array([int(r[0]) for r in rows], dtype=np.int64)
    dst = np.array([int(r[1]) for r in rows], dtype=np.int64)
    wts = np.array([float(r[2]) for r in rows])
    size = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
    if n is None:
        n = size
    elif n < size:
        raise DimensionMismatch(f"edge list references node {size - 1} but n = {n}")
    if np.any(src < 0) or np.any(dst < 0):
        raise ConfigError("node indices must be nonnegative")
    s = np.zeros((n, n))
    s[dst, src] = wts
    return s


def write_matrix_market(path, a) -> None:
    a = a.s if isinstance(a, GraphShift) else a
    scipy.io.mmwrite(str(path), sp.coo_matrix(np.asarray(a, dtype=float)), precision=17)


def read_matrix_market(path) -> np.ndarray:
    m = scipy.io.mmread(str(path))
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def read_matrix(path) -> np.ndarray:
    """Dense matrix from ``.mtx`` (MatrixMarket) or ``.csv`` (comma separated rows)."""
    path = Path(path)
    if path.suffix in (".mtx", ".mm"):
        return read_matrix_market(path)
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def load_shift(path, n: Optional[int] = None) -> GraphShift:
    """Graph shift from an edge-list CSV or a MatrixMarket file."""
    path = Path(path)
    s = read_matrix_market(path) if path.suffix in (".mtx", ".mm") else read_edge_list(path, n)
    return shift_from_matrix(s)


def write_vector(path, v) -> None:
    with open(path, "w") as fh:
        for x in np.asarray(v, dtype=float).ravel():
            fh.write(_fmt(x) + "\n")


def read_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(path, delimiter=",", ndmin=1)).astype(float).ravel()


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=1))


def read_json(path):
    return json.loads(Path(path).read_text())


def observations_from_json(doc: dict, n: int):
    """Parse ``{"sampling": [...], "y": [...], "known"?: [...], "x_k"?: [...], "eps"?: 0}``."""
    try:
        sampling = SelectionSet.of(doc["sampling"], n)
        y = np.asarray(doc["y"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"observation file lacks {exc.args[0]!r}") from None
    known = x_k = None
    if doc.get("known"):
        order = np.argsort(doc["known"])
        known = SelectionSet.of(doc["known"], n)
        x_k = np.asarray(doc["x_k"], dtype=float)[order]
    return sampling, y, known, x_k, float(doc.get("eps", 0.0))
