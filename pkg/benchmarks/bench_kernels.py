"""Compare the compiled similarity kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is timed on the same inputs under both backends; results are
checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from teaproto.retrieval import _fallback

try:
    from teaproto.retrieval import _kernels
except ImportError:
    _kernels = None


def cases(rng: np.random.Generator):
    d = 64
    for n in (16, 200, 1024, 8192):
        matrix = np.ascontiguousarray(rng.normal(size=(n, d)))
        query = np.ascontiguousarray(rng.normal(size=d))
        scores = np.ascontiguousarray(rng.normal(size=n))
        yield f"cosine_scores n={n}", "cosine_scores", (matrix, query)
        yield f"top_k n={n} k=5", "top_k", (scores, 5)
    table = np.ascontiguousarray(rng.normal(size=(4096, d)))
    for tokens in (4, 32, 256):
        rows = rng.integers(0, 4096, size=tokens).astype(np.intp)
        weights = rng.integers(1, 4, size=tokens).astype(np.float64)
        yield f"accumulate_rows tokens={tokens}", "accumulate_rows", (table, rows, weights)


def bench(fn, args, repeat: int) -> float:
    number = max(1, 2000 // repeat)
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number * 1e6


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<30} {'python us':>11} {'cython us':>11} {'speedup':>8}")
    for label, name, inputs in cases(rng):
        slow, fast = getattr(_fallback, name), getattr(_kernels, name)
        np.testing.assert_allclose(np.asarray(fast(*inputs)), np.asarray(slow(*inputs)), atol=1e-9)
        t_py, t_cy = bench(slow, inputs, args.repeat), bench(fast, inputs, args.repeat)
        print(f"{label:<30} {t_py:>11.2f} {t_cy:>11.2f} {t_py / t_cy:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
