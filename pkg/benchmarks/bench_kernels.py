"""Compare the compiled extension kernel with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--points N] [--R R] [--repeat K]
"""
import argparse
import time

import numpy as np

from polyrestrict import kernels
from polyrestrict.extension import grid_spacing, random_smooth_density


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--R", type=float, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    f = random_smooth_density(2, grid_spacing(args.R), rng)
    pts = rng.uniform(-args.R, args.R, (args.points, 2))
    active = f.active()
    print(f"backend at import: {kernels.BACKEND}; nodes={len(active[0])} points={args.points}")

    t_np, ref = best_of(lambda: kernels.extension_direct_numpy(pts, *active), args.repeat)
    print(f"numpy fallback : {t_np * 1e3:9.2f} ms")
    if kernels.BACKEND != "cython":
        print("compiled kernel unavailable; nothing to compare")
        return
    t_cy, out = best_of(lambda: kernels.extension_direct(pts, *active, kernels.default_threads()), args.repeat)
    err = np.abs(out - ref).max() / np.abs(ref).max()
    print(f"compiled kernel: {t_cy * 1e3:9.2f} ms  (speedup {t_np / t_cy:.1f}x, max rel diff {err:.1e})")


if __name__ == "__main__":
    main()
