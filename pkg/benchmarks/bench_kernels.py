"""Time the compiled kernels against the pure-numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend, the speedup, and the
largest absolute disagreement between the two backends.
"""
import argparse
import timeit

import numpy as np

from evalsim._kernels import implementations


def cases(rng):
    x = rng.normal(scale=3.0, size=200_000)
    u = rng.random(20_000)
    Xv, Xc = rng.random((2000, 2)), rng.random((40, 2))
    delta, w = rng.random((2000, 40)), np.ones((2000, 40))
    return {
        "norm_cdf (2e5)": lambda k: k.norm_cdf(x),
        "betainc (2e4)": lambda k: k.betainc(2.5, 0.7, u),
        "beta_ppf (2e4)": lambda k: k.beta_ppf(2.5, 0.7, u),
        "guttman_terms (2000x40)": lambda k: k.guttman_terms(Xv, Xc, delta, w),
    }


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    impls = implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    names = list(impls)
    print(f"{'kernel':26s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}{'max |diff|':>12s}")
    for label, fn in cases(rng).items():
        times = {}
        for name, mod in impls.items():
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:26s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in impls:
            row += f"{times['python'] / times['cython']:9.1f}x"
            row += f"{max_diff(fn(impls['python']), fn(impls['cython'])):12.2e}"
        print(row)


if __name__ == "__main__":
    main()
