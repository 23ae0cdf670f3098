"""Benchmark the compiled pyramid kernels against the pure-NumPy fallback.

Run:  python benchmarks/transform_backends.py [--batch 64] [--repeats 30]
"""

import argparse
import time

import numpy as np

from specmix import wavelet as wv
from specmix.wavelet import _pyramid_py


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - tic)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=30)
    args = ap.parse_args()

    backends = {"python": _pyramid_py}
    try:
        from specmix.wavelet import _pyramid_cy

        backends["cython"] = _pyramid_cy
    except ImportError:
        print("compiled backend not built; benchmarking the fallback only")

    g, h = wv.DEFAULT_BASIS.filters
    rng = np.random.default_rng(0)
    print(f"{'T':>6} {'batch':>6} {'backend':>8} {'forward':>12} {'inverse':>12}")
    for T in (128, 512, 1024, 4096):
        X = rng.standard_normal((args.batch, T))
        for name, mod in backends.items():
            fwd = _time(lambda: mod.forward(X, g, h), args.repeats)
            C = mod.forward(X, g, h)
            inv = _time(lambda: mod.inverse(C, g, h), args.repeats)
            print(
                f"{T:>6} {args.batch:>6} {name:>8} "
                f"{fwd * 1e3:>10.3f}ms {inv * 1e3:>10.3f}ms"
            )
        if len(backends) == 2:
            a = backends["python"].forward(X, g, h)
            b = backends["cython"].forward(X, g, h)
            assert np.max(np.abs(a - b)) < 1e-12, "backend outputs diverge"


if __name__ == "__main__":
    main()
