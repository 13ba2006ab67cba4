"""Benchmark the jitted kernels against their pure-numpy fallbacks.

Runs each kernel on convolution-sized inputs, checks that both variants
produce bit-identical output, and reports median wall times plus the
speedup. The jitted path compiles on first call, so one warmup run per
kernel happens before timing.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]

`RELEXPL_NUMBA=0` disables the jitted variants entirely; this script then
reports the numpy timings alone.
"""

import argparse
import statistics
import time

import numpy as np

from relexpl import kernels


def _median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _cases(rng):
    # shapes mirror the hot path: a padded sentence of a few hundred tokens
    # convolved at width 3, bag-level pooling, and embedding-gradient scatter
    xpad = rng.standard_normal((360, 310))
    cols = rng.standard_normal((358, 3 * 310))
    pooled = rng.standard_normal((24, 256))
    ids = rng.integers(0, 30000, size=2400)
    rows = rng.standard_normal((2400, 300))
    return [
        ("im2col", kernels.im2col_numpy, kernels.im2col_numba, (xpad, 3)),
        ("col2im", kernels.col2im_numpy, kernels.col2im_numba, (cols, 3)),
        ("rows_max", kernels.rows_max_numpy, kernels.rows_max_numba, (pooled,)),
        ("scatter_add_rows", kernels.scatter_add_rows_numpy,
         kernels.scatter_add_rows_numba, (30000, ids, rows)),
    ]


def _identical(a, b):
    if isinstance(a, tuple):
        return all(_identical(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=50,
                        help="timed repetitions per kernel (median reported)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"jitted path active: {kernels.USING_NUMBA}")
    header = f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8}  agree"
    print(header)
    print("-" * len(header))

    for name, f_np, f_nb, call_args in _cases(rng):
        t_np = _median_time(f_np, call_args, args.repeats)
        if f_nb is None:
            print(f"{name:<18} {t_np * 1e6:>8.1f}us {'-':>10} {'-':>8}  -")
            continue
        f_nb(*call_args)  # warmup: triggers compilation outside the timing
        t_nb = _median_time(f_nb, call_args, args.repeats)
        agree = _identical(f_np(*call_args), f_nb(*call_args))
        print(f"{name:<18} {t_np * 1e6:>8.1f}us {t_nb * 1e6:>8.1f}us "
              f"{t_np / t_nb:>7.2f}x  {'bit-identical' if agree else 'DIFFER'}")
        if not agree:
            raise SystemExit(f"{name}: jitted and numpy outputs differ")


if __name__ == "__main__":
    main()
