#!/usr/bin/env python3
"""Timing comparison of the compiled vs numpy selection kernels.

The scan kernels dominate the per-batch cost once the proxy bank gets large
(thousands of identities), which is where the compiled single-pass loops pay
off; at desk scale the numpy fallback is entirely adequate. GEMM work stays
on BLAS either way and is not measured here.

Usage: python3 benchmarks/bench_backends.py [--batch 256] [--classes 8192]
"""

import argparse
import time

import numpy as np

from nptmetric import backends


def time_fn(fn, *args, repeats=20):
    fn(*args)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--classes", type=int, default=8192)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    dots = rng.standard_normal((args.batch, args.classes))
    exclude = rng.integers(0, args.classes, args.batch).astype(np.int64)
    square = rng.standard_normal((args.batch, args.batch))
    labels = rng.integers(0, max(2, args.batch // 4), args.batch).astype(np.int64)

    names = backends.available_backends()
    if len(names) < 2:
        print(f"only {names} available; build the extension to compare")

    cases = [
        ("nearest_negative", (dots, exclude)),
        ("two_nearest_negatives", (dots, exclude)),
        ("hard_pos_neg", (square, labels)),
    ]

    print(f"B={args.batch} C={args.classes}, best of {args.repeats}")
    print(f"{'kernel':<24}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for kernel, call_args in cases:
        timings = {}
        results = {}
        for name in names:
            mod = backends.get_backend(name)
            timings[name] = time_fn(getattr(mod, kernel), *call_args,
                                    repeats=args.repeats)
            results[name] = getattr(mod, kernel)(*call_args)
        first = results[names[0]]
        for name in names[1:]:
            for a, b in zip(first, results[name]):
                assert np.array_equal(a, b), f"{kernel}: {names[0]} vs {name} disagree"
        row = f"{kernel:<24}" + "".join(f"{timings[n] * 1e3:>10.3f}ms" for n in names)
        if len(names) == 2:
            ratio = timings["python"] / timings["c"] if "c" in timings else 1.0
            row += f"{ratio:>9.1f}x"
        print(row)
    print("all backends agree on every output")


if __name__ == "__main__":
    main()
