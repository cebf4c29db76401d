"""Time the sampling kernels on the numba and numpy backends.

Usage: python benchmarks/bench_kernels.py [--n 200] [--m 40] [--repeat 5]

Each kernel runs once per backend before timing so numba compilation is
excluded.  Results from both backends are checked for agreement.
"""

import argparse
import timeit

import numpy as np

from graphdeconv import _kernels
from graphdeconv.graph import filter_matrix, generate_graph
from graphdeconv.sampling import exhaustive_sample, greedy_sample


def cases(n, m, seed=0):
    sh = generate_graph("er", n, seed, p=0.1)
    h = filter_matrix(sh, [1.0, 0.6, 0.3])
    q = h[: m // 2].T @ h[: m // 2]
    cand = np.arange(m // 2, n)
    small = h[:16]
    return {
        "gram_coherence": lambda: _kernels.gram_coherence(q),
        "candidate_rho": lambda: _kernels.candidate_rho(q, h, cand),
        "exhaustive_pair": lambda: _kernels.exhaustive_min_rho(h, 2),
        "exhaustive_m3_n16": lambda: exhaustive_sample(small, 3).indices,
        "greedy_sample": lambda: greedy_sample(h, m).indices,
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--m", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = ["numba", "numpy"] if _kernels.HAVE_NUMBA else ["numpy"]
    table = {}
    for name, fn in cases(args.n, args.m).items():
        outputs = {}
        for be in backends:
            with _kernels.use_backend(be):
                outputs[be] = fn()  # warm-up (and numba compilation)
                table[name, be] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        first, *rest = outputs.values()
        if any(not _same(first, other) for other in rest):
            raise SystemExit(f"{name}: backends disagree")

    print(f"N={args.n}, m={args.m}, best of {args.repeat}")
    print(f"{'kernel':22s}" + "".join(f"{be:>12s}" for be in backends) + ("    speedup" if len(backends) == 2 else ""))
    for name in cases(8, 4):
        row = f"{name:22s}" + "".join(f"{table[name, be] * 1e3:10.2f}ms" for be in backends)
        if len(backends) == 2:
            row += f"  {table[name, 'numpy'] / table[name, 'numba']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
