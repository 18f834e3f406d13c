"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--n 5000] [--dim 20] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from crossim import _kernels_py

try:
    from crossim import _kernels as compiled
except ImportError:
    compiled = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=5000, help="sample rows")
    ap.add_argument("--queries", type=int, default=1000)
    ap.add_argument("--dim", type=int, default=20)
    ap.add_argument("--radius", type=float, default=1.2)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    centers = rng.uniform(0, 10, size=(16, args.dim))
    X = centers[rng.integers(0, 16, args.n)] + rng.normal(scale=0.7, size=(args.n, args.dim))
    Q = centers[rng.integers(0, 16, args.queries)] + rng.normal(scale=0.7, size=(args.queries, args.dim))
    w = rng.uniform(0, 1, size=args.dim)

    cases = {
        "nearest": lambda k: k.nearest(X, Q, w),
        "count_within": lambda k: k.count_within(X, Q, w, args.radius),
        "greedy_representatives": lambda k: k.greedy_representatives(X, w, args.radius),
        "greedy_separated": lambda k: k.greedy_separated(X, w, 2 * args.radius),
    }
    backends = {"python": _kernels_py}
    if compiled is not None:
        backends["compiled"] = compiled
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"n={args.n} queries={args.queries} dim={args.dim} (best of {args.repeat})")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if compiled else ""))
    for name, fn in cases.items():
        times = {b: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for b, k in backends.items()}
        row = f"{name:<24}" + "".join(f"{t:>11.3f}s" for t in times.values())
        if compiled is not None:
            row += f"{times['python'] / times['compiled']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
