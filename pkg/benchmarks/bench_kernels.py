"""Compiled vs numpy min-plus kernel, and one full oracle solve per backend.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from strategic_screening import kernels

ORACLE_SNIPPET = """
import time
from strategic_screening import geometry as g, oracle, kernels
p = g.Pipeline((g.HalfspaceClassifier([-3.0, 4.0], 1.0), g.HalfspaceClassifier([1.0, 0.0], 1.0),
                g.HalfspaceClassifier([1.0, 1.0], 2.5)))
grid = oracle.GridSpec([-1, -1], [3, 3], 0.02)
t = time.perf_counter()
r = oracle.oracle_sequential(p, [0.0, 0.0], None, grid)
print(kernels.BACKEND, time.perf_counter() - t, r.cost)
"""


def bench_kernel(n_prev, n_next, code, repeat):
    rng = np.random.default_rng(0)
    Y = rng.uniform(-1, 1, (n_prev, 2))
    Z = rng.uniform(-1, 1, (n_next, 2))
    v = rng.uniform(0, 1, n_prev)
    out = {}
    for backend in ("python", "cython"):
        if backend == "cython" and kernels.BACKEND != "cython":
            continue
        fn = lambda: kernels.minplus_transition(v, Y, Z, code, backend=backend)  # noqa: E731
        out[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
    return out


def bench_oracle():
    rows = []
    for pure in ("", "1"):
        env = dict(os.environ, STRATEGIC_SCREENING_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", ORACLE_SNIPPET], env=env, capture_output=True,
                             text=True, check=True)
        backend, secs, cost = res.stdout.split()
        rows.append((backend, float(secs), float(cost)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"compiled kernel available: {kernels.BACKEND == 'cython'}")
    print(f"{'norm':>9} {'|Y|':>6} {'|Z|':>6} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name, code in kernels.NORM_CODES.items():
        for n_prev, n_next in ((2000, 2000), (8000, 8000)):
            t = bench_kernel(n_prev, n_next, code, args.repeat)
            cy = t.get("cython", float("nan"))
            print(f"{name:>9} {n_prev:>6} {n_next:>6} {t['python']:>10.4f} {cy:>10.4f} {t['python'] / cy:>8.1f}")
    print("\nthree-stage oracle, 201 x 201 grid")
    for backend, secs, cost in bench_oracle():
        print(f"{backend:>8}: {secs:.3f} s  cost {cost:.6f}")


if __name__ == "__main__":
    main()
