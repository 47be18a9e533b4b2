#!/usr/bin/env python3
"""Benchmark the numba eigensolver backend against the numpy fallback.

The same decomposition runs through both backends over a range of matrix
sizes; correctness is cross-checked on every sample. Force the fallback
package-wide with HCNTK_NO_NUMBA=1.

Usage: python benchmarks/bench_eigh.py [--sizes 50,100,200] [--repeats 5]
"""

import argparse
import time

import numpy as np

from hcntk import _eigh


def bench(backend, mats, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for a in mats:
            vals, vecs, sweeps = _eigh.decompose_symmetric(a, backend=backend)
            if sweeps < 0:
                raise RuntimeError("eigensolver failed to converge")
        best = min(best, time.perf_counter() - t0)
    return best / len(mats)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="25,50,100,200")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--matrices", type=int, default=8)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rng = np.random.default_rng(0)
    print(f"numba available: {_eigh.HAS_NUMBA} (active backend: {_eigh.BACKEND})")
    if _eigh.HAS_NUMBA:  # trigger compilation outside the timed region
        _eigh.decompose_symmetric(np.eye(4), backend="numba")

    header = f"{'n':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9} {'max recon err':>14}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        mats = []
        for _ in range(args.matrices):
            a = rng.standard_normal((n, n))
            mats.append(a + a.T)
        t_np = bench("numpy", mats, args.repeats)
        worst = 0.0
        for a in mats:
            vals, vecs, _ = _eigh.decompose_symmetric(a, backend="numpy")
            rec = vecs @ (vals[:, None] * vecs.T)
            worst = max(worst, np.linalg.norm(rec - a) / np.linalg.norm(a))
        if _eigh.HAS_NUMBA:
            t_nb = bench("numba", mats, args.repeats)
            for a in mats:
                vals, vecs, _ = _eigh.decompose_symmetric(a, backend="numba")
                rec = vecs @ (vals[:, None] * vecs.T)
                worst = max(worst, np.linalg.norm(rec - a) / np.linalg.norm(a))
            print(f"{n:>6} {t_np * 1e3:>12.2f} {t_nb * 1e3:>12.2f} "
                  f"{t_np / t_nb:>8.1f}x {worst:>14.2e}")
        else:
            print(f"{n:>6} {t_np * 1e3:>12.2f} {'-':>12} {'-':>9} {worst:>14.2e}")


if __name__ == "__main__":
    main()
