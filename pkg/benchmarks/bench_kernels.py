"""Time the lasso coordinate-descent path on both backends.

    python benchmarks/bench_kernels.py --n 2000 --p 50 --repeats 5

The numba backend is compiled once before timing starts.
"""

import argparse
import time

import numpy as np

from glmcausal import kernels


def problem(n, p, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X = (X - X.mean(0)) / X.std(0)
    beta = np.zeros(p)
    beta[: max(1, p // 10)] = rng.uniform(-2, 2, max(1, p // 10))
    y = X @ beta + rng.standard_normal(n)
    y -= y.mean()
    lmax = np.max(np.abs(X.T @ y)) / n
    return X, y, lmax * np.logspace(0, -3, 100)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--p", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y, lams = problem(args.n, args.p, args.seed)
    backends = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])
    results = {}
    for b in backends:
        kernels.lasso_path_cd(X[:50], y[:50], lams[:2], backend=b)  # compile / warm up
        results[b] = best_of(lambda: kernels.lasso_path_cd(X, y, lams, backend=b), args.repeats)

    print(f"lasso path, n={args.n}, p={args.p}, 100 lambdas, best of {args.repeats}")
    for b, t in results.items():
        print(f"  {b:6s} {t * 1e3:10.2f} ms")
    if "numba" in results:
        a, _ = kernels.lasso_path_cd(X, y, lams, backend="numpy")
        c, _ = kernels.lasso_path_cd(X, y, lams, backend="numba")
        print(f"  speedup {results['numpy'] / results['numba']:.1f}x, max |difference| {np.max(np.abs(a - c)):.1e}")
    else:
        print("  numba not installed; numpy only")


if __name__ == "__main__":
    main()
