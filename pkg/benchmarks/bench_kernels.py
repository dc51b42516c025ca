"""Compare the compiled grid kernel against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

For each case the Lagrangian grid is evaluated with both backends; the
script reports the best wall time of each, the speedup and the largest
relative difference of the resulting ``S_Lambda``.
"""

import argparse
import csv
import sys
import time

import numpy as np

from homvar import _kernels_py
from homvar.action import QuadratureBox
from homvar.harness import DEFAULT_DOMAIN, random_nd_measure

try:
    from homvar import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

CASES = [
    # (n, atoms, points per axis)
    (1, 5, 5),
    (1, 50, 7),
    (2, 5, 5),
    (2, 50, 7),
    (2, 200, 5),
    (3, 20, 5),
]


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run_case(n, atoms, ppa, repeat, seed=0):
    rng = np.random.default_rng(seed)
    nu = random_nd_measure(rng, n, atoms, DEFAULT_DOMAIN)
    X, W = QuadratureBox((2.0,) * 4, (ppa,) * 4).nodes()
    P, M = np.ascontiguousarray(nu.points), np.ascontiguousarray(nu.weights)

    def go(mod):
        L, t, _ = mod.lagrangian_grid(P, M, X)
        return mod.pairwise_sum(W * L)

    tp, sp = best_time(lambda: go(_kernels_py), repeat)
    row = {"n": n, "atoms": atoms, "grid": ppa**4, "python_s": tp, "cython_s": None, "speedup": None, "rel_diff": None}
    if _kernels_c is not None:
        tc, sc = best_time(lambda: go(_kernels_c), repeat)
        row.update(cython_s=tc, speedup=tp / tc, rel_diff=abs(sc - sp) / max(abs(sp), 1e-300))
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled kernels not built; timing the fallback only", file=sys.stderr)

    rows = [run_case(*case, repeat=args.repeat) for case in CASES]
    print(f"{'n':>2} {'atoms':>6} {'nodes':>6} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'rel diff':>9}")
    for r in rows:
        c = "-" if r["cython_s"] is None else f"{1e3 * r['cython_s']:12.2f}"
        s = "-" if r["speedup"] is None else f"{r['speedup']:8.2f}"
        d = "-" if r["rel_diff"] is None else f"{r['rel_diff']:9.1e}"
        print(f"{r['n']:>2} {r['atoms']:>6} {r['grid']:>6} {1e3 * r['python_s']:12.2f} {c:>12} {s:>8} {d:>9}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
