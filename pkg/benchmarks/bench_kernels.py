#!/usr/bin/env python3
"""Compare the numba kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --n 4000 --shapes 10x50 50x50 80x50 --repeat 5
    python3 benchmarks/bench_kernels.py --json bench.json

The same switch is available without this script: set LOWRANK_SYSID_NUMBA=0
before import to force the numpy path.
"""
import argparse
import json
import time

import numpy as np

from lowrank_sysid import _kernels


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, T, d, rng):
    X = rng.standard_normal((n, T, d))
    Y = rng.standard_normal((n, T, 1))
    P0 = np.zeros((d, d))
    P0[:5, :5] = np.eye(min(5, d))
    pinv = np.linalg.pinv(X)
    return {
        "pinv_batch": lambda: _kernels.pinv_batch(X),
        "apply_batch": lambda: _kernels.apply_batch(pinv, Y),
        "projection_moments": lambda: _kernels.projection_moments(X, P0),
        "min_singular_values": lambda: _kernels.min_singular_values(X),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000, help="systems per batch")
    ap.add_argument("--shapes", nargs="+", default=["10x50", "50x50", "80x50", "3x5"],
                    help="TxD design shapes")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path can run")
    backends = ["numpy"] + (["numba"] if _kernels.NUMBA_AVAILABLE else [])
    rng = np.random.default_rng(0)
    results = []

    print(f"{'kernel':<22}{'shape':>8}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for shape in args.shapes:
        T, d = (int(v) for v in shape.lower().split("x"))
        for name, fn in cases(args.n, T, d, rng).items():
            row = {"kernel": name, "n": args.n, "T": T, "d": d}
            for b in backends:
                previous = _kernels.set_backend(b)
                try:
                    fn()  # warm-up, includes JIT compilation on first numba call
                    row[b] = best_time(fn, args.repeat)
                finally:
                    _kernels.set_backend(previous)
            speed = row["numpy"] / row["numba"] if "numba" in row else float("nan")
            row["speedup"] = speed
            results.append(row)
            print(f"{name:<22}{shape:>8}" + "".join(f"{row[b] * 1e3:>10.1f}ms" for b in backends)
                  + f"{speed:>9.2f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
