"""Compare the compiled and numpy kernel backends on CN system matrices.

Usage: python3 benchmarks/bench_kernels.py [--counts 16 24 32] [--repeat 20]
"""
import argparse
import time

import numpy as np

from maxcloak._kernels import BACKENDS
from maxcloak.config import build_problem, from_preset
from maxcloak.linalg import SparseMatrix, cg_solve


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--counts", type=int, nargs="+", default=[16, 24, 32])
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)
    print(f"backends: {sorted(BACKENDS)}")
    print(f"{'cells':>6} {'n':>8} {'nnz':>9} {'backend':>8} {'matvec [ms]':>12} {'cg [ms]':>10} {'cg its':>7}")
    for c in args.counts:
        disc = build_problem(from_preset("manufactured", counts=c, steps=25)).disc
        A = SparseMatrix.from_scipy(disc.cn_matrix())
        rng = np.random.default_rng(0)
        x = rng.standard_normal(A.shape[1])
        b = rng.standard_normal(A.shape[0])
        out = np.empty(A.shape[0])
        ref = None
        for name in sorted(BACKENDS):
            tm = best_of(lambda: A.matvec(x, out, backend=name, nthreads=1), args.repeat)
            if ref is None:
                ref = out.copy()
            elif np.linalg.norm(out - ref) > 1e-13 * np.linalg.norm(ref):
                raise SystemExit(f"backend {name} disagrees on the matvec")
            res = {}

            def solve():
                res["x"], res["rep"] = cg_solve(A, b, tol=1e-10, backend=name, nthreads=1)

            tc = best_of(solve, max(1, args.repeat // 5))
            print(f"{c:>6} {A.shape[0]:>8} {len(A.data):>9} {name:>8} {1e3 * tm:>12.3f} {1e3 * tc:>10.2f} "
                  f"{res['rep'].iterations:>7}")


if __name__ == "__main__":
    main()
