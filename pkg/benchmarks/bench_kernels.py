"""Compare the compiled and numpy gate kernels on the same batches.

Run with ``python benchmarks/bench_kernels.py [--rows N] [--repeats R]``. Prints
one line per norm combination with the median time of each backend, the speedup
and the largest disagreement in exact path length.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from refloc import kernels
from refloc.geometry import Hyperplane
from refloc.norms import parse_norm
from refloc.refraction import GateBatch

CASES = [
    ("lp:2/1", "lp:3/1", None),
    ("lp:3/2", "lp:5/3", None),
    ("l1", "linf", None),
    ("lp:2/1", "lp:3/1", "linf:1/4"),
    ("lp:3/2", "lp:2/1", "lp:2/1:1/2"),
]


def make_batch(rows: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    h = Hyperplane(np.r_[np.zeros(d - 1), 1.0], 0.0)
    X = rng.uniform(-5, 5, (rows, d))
    Q = rng.uniform(-5, 5, (rows, d))
    X[:, -1] = -np.abs(X[:, -1]) - 0.1
    Q[:, -1] = np.abs(Q[:, -1]) + 0.1
    return h, X, Q


def timed(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = ["numpy"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing numpy only")
    h, X, Q = make_batch(args.rows, args.dim, args.seed)
    print(f"{'legs':32s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup  max|dlen|")
    for na, nb, nh in CASES:
        lens, secs = {}, {}
        for b in backends:
            gb = GateBatch(h, parse_norm(na), parse_norm(nb), parse_norm(nh) if nh else None, backend=b)
            secs[b], res = timed(lambda: gb.solve(X, Q), args.repeats)
            lens[b] = gb.exact_legs(X, Q, res[0]).sum(axis=1)
        label = "/".join(x for x in (na, nb, nh) if x)
        line = f"{label:32s} " + " ".join(f"{secs[b]:10.4f}" for b in backends)
        if "cython" in secs:
            diff = np.max(np.abs(lens["numpy"] - lens["cython"]))
            line += f"   {secs['numpy'] / secs['cython']:7.1f}x  {diff:.1e}"
        print(line)


if __name__ == "__main__":
    main()
