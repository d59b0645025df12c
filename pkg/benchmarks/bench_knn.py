"""Compare the compiled neighbor-search kernel against the pure-numpy
fallback on growing cloud sizes.

Run:  python3 benchmarks/bench_knn.py [--sizes 1000,4000] [--k 16] [--repeat 3]
"""
import argparse
import time

import numpy as np

from siesef.neighborhood import (HAVE_COMPILED_KERNEL, PointCloud,
                                 knn_fallback, knn_search)


def time_fn(fn, cloud, k, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn(cloud, k)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,2000,4000,8000",
                        help="comma-separated cloud sizes")
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    print(f"compiled kernel available: {HAVE_COMPILED_KERNEL}")
    print(f"{'N':>8} {'default (s)':>12} {'fallback (s)':>13} {'speedup':>8}  identical")
    for n in sizes:
        cloud = PointCloud(rng.uniform(0, 10, (n, 3)).astype(np.float32))
        t_default, a = time_fn(knn_search, cloud, args.k, args.repeat)
        t_fallback, b = time_fn(knn_fallback, cloud, args.k, args.repeat)
        same = (np.array_equal(a.neighbor_ids, b.neighbor_ids)
                and np.array_equal(a.distances, b.distances))
        print(f"{n:>8} {t_default:>12.4f} {t_fallback:>13.4f} "
              f"{t_fallback / t_default:>7.2f}x  {same}")
        if not same:
            raise SystemExit("kernel outputs diverged; benchmark aborted")


if __name__ == "__main__":
    main()
