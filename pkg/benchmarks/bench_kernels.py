"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Sizes match what training touches: a d=8 flow layer (8 reflections of length
8) and a KNN query against a bank of a few hundred 128-d features.
"""
import argparse
import timeit

import numpy as np

from haad import _kernels_py

try:
    from haad import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    V = rng.normal(size=(8, 8))
    Q = _kernels_py.householder_product(V)
    G = rng.normal(size=(8, 8))
    bank = rng.normal(size=(400, 128))
    query = rng.normal(size=128)
    return {
        "householder_product d=8": lambda m: m.householder_product(V),
        "householder_product_grad d=8": lambda m: m.householder_product_grad(V, Q, G),
        "knn_mean_distance n=400 d=128 k=3": lambda m: m.knn_mean_distance(bank, query, 3),
    }


def best_us(fn, mod, repeat):
    timer = timeit.Timer(lambda: fn(mod))
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n * 1e6


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':36s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        py = best_us(fn, _kernels_py, args.repeat)
        if _kernels is None:
            print(f"{name:36s} {py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        cy = best_us(fn, _kernels, args.repeat)
        print(f"{name:36s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
