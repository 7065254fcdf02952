"""Time the compiled and numpy kernel backends on filter-bank workloads.

    python benchmarks/bench_kernels.py [--rows 512] [--length 172] [--repeat 5]

Rows stand for (batch x channel) series; the default mirrors one training
batch of 512 single-channel windows at the default leaf length of 172.
"""
import argparse
import timeit
from contextlib import contextmanager

import numpy as np

from prism import kernels
from prism.filters import FilterSpec, decompose_adjoint, decompose_array, ema_alpha, haar_kernel, smoothing_ladder


@contextmanager
def backend(module):
    saved = kernels._impl
    kernels._impl = module
    smoothing_ladder.cache_clear()
    try:
        yield
    finally:
        kernels._impl = saved


def cases(x, g):
    taps = haar_kernel(4)
    yield "smooth (32 taps)", lambda: kernels.smooth(x, taps, 16)
    yield "smooth adjoint", lambda: kernels.smooth_adjoint(x, taps, 16)
    yield "ema", lambda: kernels.ema(x, ema_alpha(24.0))
    yield "ema adjoint", lambda: kernels.ema_adjoint(x, ema_alpha(24.0))
    for family in ("haar", "dog", "binomial", "ema"):
        spec = FilterSpec.default(family)
        yield f"decompose {family} K={spec.K}", lambda s=spec: decompose_array(x, s)
        yield f"adjoint {family}", lambda s=spec: decompose_adjoint(g[: s.K], s)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=512)
    ap.add_argument("--length", type=int, default=172)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    x = rng.normal(size=(args.rows, args.length))
    g = rng.normal(size=(6, args.rows, args.length))
    found = kernels.backends()
    results = {}
    for name, module in found.items():
        with backend(module):
            for label, fn in cases(x, g):
                fn()
                number = 3
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                results.setdefault(label, {})[name] = best

    names = list(found)
    print(f"rows={args.rows} length={args.length} (best of {args.repeat}, ms per call)")
    print(f"{'workload':<24}" + "".join(f"{n:>10}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for label, row in results.items():
        line = f"{label:<24}" + "".join(f"{row[n] * 1e3:>10.3f}" for n in names)
        if "cython" in row:
            line += f"{row['python'] / row['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
