"""Compare the compiled and numpy batch kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 10000] [--n 100] [--repeat 5]

Times ``oos_rows`` on a Table-1 shaped block (three sources, 20/30/50
percent) for each available backend and checks that they agree.
"""

import argparse
import sys
import timeit

import numpy as np

from oos_error import kernels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10_000)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    sizes = np.array([args.n // 5, 3 * args.n // 10, args.n - args.n // 5 - 3 * args.n // 10])
    rng = np.random.default_rng(0)
    data = rng.normal(0, 3, (args.rows, int(sizes.sum())))

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled extension not built; only the numpy backend is available", file=sys.stderr)
    print(f"rows={args.rows} n={args.n} sizes={sizes.tolist()} repeat={args.repeat}")
    print(f"{'backend':<8} {'loss':<9} {'best (ms)':>10} {'per row (us)':>13}")
    timings = {}
    for loss in ("squared", "absolute"):
        ref = None
        for name, mod in impls.items():
            out = kernels.oos_rows(data, sizes, loss, impl=mod)
            if ref is None:
                ref = out
            elif not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name} disagrees with the other backend on {loss} loss")
            best = min(timeit.repeat(lambda: kernels.oos_rows(data, sizes, loss, impl=mod),
                                     number=1, repeat=args.repeat))
            timings[(name, loss)] = best
            print(f"{name:<8} {loss:<9} {best * 1e3:>10.2f} {best / args.rows * 1e6:>13.3f}")
    if "cython" in impls:
        for loss in ("squared", "absolute"):
            print(f"speedup ({loss}): {timings[('numpy', loss)] / timings[('cython', loss)]:.1f}x")


if __name__ == "__main__":
    main()
