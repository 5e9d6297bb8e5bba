#!/usr/bin/env python3
"""Benchmark the batch-scoring kernels: numba @njit vs the pure-numpy fallback.

The workload mirrors the exhaustive-search hot loop: score every 3^q
assignment vector for a provisioning. Run:

    python benchmarks/bench_kernels.py [--queries 12] [--repeats 3]

Forcing the numpy backend elsewhere is BLUEPRINTD_NO_NUMBA=1; here both
implementations are invoked explicitly so one process measures both.
"""

import argparse
import time

import numpy as np

from blueprintd import kernels
from blueprintd.blueprint import ENGINES
from blueprintd.gen import make_search_instance
from blueprintd.search import _all_assignments


def bench(fn, rows, args, repeats):
    fn(rows[:128], *args)  # warm up (JIT compile / cache touch)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(rows, *args)
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    inst = make_search_instance(seed=args.seed, n_queries=args.queries)
    current = {e: inst.inputs.current.provisionings[e] for e in ENGINES}
    ctx = inst.inputs.context(current)
    rows = _all_assignments(args.queries)
    n = rows.shape[0]
    print(f"scoring {n:,} assignment vectors x {args.queries} queries "
          f"(best of {args.repeats})\n")

    results = {}
    t_np, out_np = bench(kernels.score_batch_numpy, rows, ctx.kernel_args, args.repeats)
    results["numpy"] = t_np
    print(f"  numpy : {t_np:8.3f} s   {n / t_np / 1e6:6.2f} M rows/s")

    if kernels.numba_enabled() or True:
        try:
            t_nb, out_nb = bench(
                kernels.score_batch_numba, rows, ctx.kernel_args, args.repeats
            )
        except ImportError:
            print("  numba : unavailable")
        else:
            results["numba"] = t_nb
            print(f"  numba : {t_nb:8.3f} s   {n / t_nb / 1e6:6.2f} M rows/s")
            fin = np.isfinite(out_np[0])
            same = np.array_equal(np.isfinite(out_nb[0]), fin) and np.allclose(
                out_nb[0][fin], out_np[0][fin], rtol=1e-9
            )
            print(f"\n  backends agree: {same}")
            print(f"  speedup: {t_np / t_nb:.1f}x  (active backend: {kernels.ACTIVE_BACKEND})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
