"""Time the pairwise BEV IoU matrix on the numba and pure-numpy backends.

Usage::

    python benchmarks/bench_bev_iou.py [--sizes 50 200 500] [--repeat 3] [--dense]

With ``STRATDET_NO_NUMBA=1`` the default backend is numpy; both backends can
still be requested explicitly when numba is installed.
"""

import argparse
import time

import numpy as np

from stratdet._accel import HAVE_NUMBA, USE_NUMBA
from stratdet.geometry import bev_corners, bev_iou_matrix


def random_boxes(rng, n, dense=False):
    if dense:  # one cluster: nearly every pair overlaps
        x, z = rng.uniform(-2, 2, n), rng.uniform(18, 22, n)
    else:
        x, z = rng.uniform(-15, 15, n), rng.uniform(5, 60, n)
    return bev_corners(x, z, rng.uniform(1.4, 2.0, n),
                       rng.uniform(3.2, 4.8, n), rng.uniform(-np.pi, np.pi, n))


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 500])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dense", action="store_true", help="cluster all boxes so most pairs overlap")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"numba installed: {HAVE_NUMBA}; default backend: {'numba' if USE_NUMBA else 'numpy'}")
    if HAVE_NUMBA:
        warm = random_boxes(rng, 4)
        bev_iou_matrix(warm, warm, "numba")  # compile outside the timed region
    print(f"{'n':>6}" + "".join(f"{b + ' [s]':>14}" for b in backends) + f"{'speed-up':>10}{'max diff':>12}")
    for n in args.sizes:
        boxes = random_boxes(rng, n, args.dense)
        results, times = {}, {}
        for b in backends:
            times[b] = best_time(lambda: results.__setitem__(b, bev_iou_matrix(boxes, boxes, b)), args.repeat)
        row = f"{n:>6}" + "".join(f"{times[b]:>14.4f}" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(results["numba"] - results["numpy"])))
            row += f"{times['numpy'] / times['numba']:>9.1f}x{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
