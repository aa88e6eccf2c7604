"""Compare the numba and pure-numpy KNN kernels.

Both backends must return bit-identical (ids, d2); this script checks
that on every size before timing. Run from the repo root:

    python3 benchmarks/kernel_backends.py
    python3 benchmarks/kernel_backends.py --sizes 2000,8000,32000 --k 16
"""

import argparse
import time

import numpy as np

from scaleseg._kernels import _HAS_NUMBA, _knn_topk_numba, _knn_topk_numpy
from scaleseg.report import format_table


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,4000,16000,64000",
                    help="comma-separated point counts (M = Q = size)")
    ap.add_argument("--k", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    print(f"numba available: {_HAS_NUMBA}, k={args.k}, "
          f"best of {args.repeats} runs")

    if _HAS_NUMBA:  # compile outside the timed region
        warm = rng.uniform(0, 1, size=(64, 3))
        _knn_topk_numba(warm, warm, min(args.k, 64))

    headers = ["points", "evals", "numpy_ms"]
    if _HAS_NUMBA:
        headers += ["numba_ms", "speedup"]
    rows = []
    for n in sizes:
        pts = rng.uniform(0, 10, size=(n, 3))
        qs = rng.uniform(0, 10, size=(n, 3))
        k = min(args.k, n)
        np_ms = best_of(lambda: _knn_topk_numpy(pts, qs, k), args.repeats)
        row = [n, n * n, round(np_ms, 2)]
        if _HAS_NUMBA:
            nb_ms = best_of(lambda: _knn_topk_numba(pts, qs, k), args.repeats)
            ia, da = _knn_topk_numba(pts, qs, k)
            ib, db = _knn_topk_numpy(pts, qs, k)
            assert np.array_equal(ia, ib) and np.array_equal(da, db), \
                f"backend mismatch at n={n}"
            row += [round(nb_ms, 2), round(np_ms / nb_ms, 2)]
        rows.append(row)

    for line in format_table(headers, rows):
        print(line)
    if _HAS_NUMBA:
        print("outputs bit-identical across backends on all sizes")


if __name__ == "__main__":
    main()
