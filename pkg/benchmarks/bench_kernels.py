"""Timing comparison of the numba kernels against their pure-numpy fallbacks.

Run directly: python benchmarks/bench_kernels.py [--nx 512] [--repeat 5]
The same comparison can be forced package-wide with MSRAS_PURE_NUMPY=1.
"""

import argparse
import time

import numpy as np

from msras import kernels
from msras.grid import element_stiffness


def best_of(fn, repeat, *args):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_assembly(nx, repeat):
    ny = nx
    cy, cx = np.divmod(np.arange(nx * ny, dtype=np.int64), nx)
    rng = np.random.default_rng(0)
    coeff = rng.uniform(1.0, 1e6, nx * ny)
    kref = element_stiffness(1.0, 1.0 / nx, 1.0 / ny)
    node_map = np.arange((nx + 1) * (ny + 1), dtype=np.int64)
    args = (cx, cy, coeff, kref, node_map, nx)
    if kernels.HAS_NUMBA:
        kernels._stiffness_triplets_numba(*args)  # compile before timing
        t_nb = best_of(kernels._stiffness_triplets_numba, repeat, *args)
    else:
        t_nb = None
    t_np = best_of(kernels._stiffness_triplets_numpy, repeat, *args)
    return t_np, t_nb, 16 * nx * ny


def bench_distances(nx, repeat, cap=3):
    rng = np.random.default_rng(1)
    mask = np.zeros((nx, nx), dtype=bool)
    mask[nx // 8 : -nx // 8, nx // 8 : -nx // 8] = True
    mask ^= rng.random((nx, nx)) < 0.05
    args = (mask, cap)
    if kernels.HAS_NUMBA:
        kernels._pu_distances_numba(*args)
        t_nb = best_of(kernels._pu_distances_numba, repeat, *args)
    else:
        t_nb = None
    t_np = best_of(kernels._pu_distances_numpy, repeat, *args)
    return t_np, t_nb, (nx + 1) ** 2


def report(name, t_np, t_nb, work):
    print(f"{name}:")
    print(f"  numpy: {1e3 * t_np:8.2f} ms  ({work / t_np / 1e6:7.1f} M items/s)")
    if t_nb is None:
        print("  numba: not available")
    else:
        print(f"  numba: {1e3 * t_nb:8.2f} ms  ({work / t_nb / 1e6:7.1f} M items/s)"
              f"  -> {t_np / t_nb:.2f}x vs numpy")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"grid {args.nx}x{args.nx}, best of {args.repeat};"
          f" active backend: {kernels.ACTIVE_BACKEND}")
    report("stiffness triplets", *bench_assembly(args.nx, args.repeat))
    report("pu distances", *bench_distances(args.nx, args.repeat))


if __name__ == "__main__":
    main()
