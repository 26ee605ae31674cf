"""Timing comparison of the compiled kernels against the numpy fallback.

Runs each hot kernel on both backends, checks they agree, and prints a
small table of per-call times and speedups. The numpy fallback is always
available; the compiled column is skipped when the extension is absent.

Usage: python3 benchmarks/bench_kernels.py [--n 2000] [--d 12] [--repeat 5]
"""

import argparse
import time

import numpy as np

from labelpool._kernels import _numpy

try:
    from labelpool._kernels import _core
except ImportError:
    _core = None


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_divergence(n, d, repeat, rng):
    rows = rng.dirichlet(np.ones(d), size=n)
    cases = []
    for kind, name in enumerate(("kl", "euclidean", "chebyshev", "canberra")):
        args = (rows, kind)
        t_np = _time(_numpy.divergence_matrix, args, repeat)
        t_cy = None
        if _core is not None:
            t_cy = _time(_core.divergence_matrix, args, repeat)
            gap = np.max(np.abs(_core.divergence_matrix(*args) - _numpy.divergence_matrix(*args)))
            assert gap <= 1e-10, f"backend mismatch for {name}: {gap}"
        cases.append((f"divergence_matrix[{name}] ({n}x{d})", t_np, t_cy))
    return cases


def bench_sampling(n, d, repeat, rng):
    k = max(n // 10, 1)
    cdf = np.cumsum(rng.dirichlet(np.ones(d), size=k), axis=1)
    cdf[:, -1] = 1.0
    src = rng.integers(0, k, size=n).astype(np.int64)
    m = np.full(n, 10, dtype=np.int64)
    u = rng.random(int(m.sum()))
    args = (cdf, src, u, m)
    t_np = _time(_numpy.categorical_counts, args, repeat)
    t_cy = None
    if _core is not None:
        t_cy = _time(_core.categorical_counts, args, repeat)
        assert np.array_equal(_core.categorical_counts(*args), _numpy.categorical_counts(*args))
    return [(f"categorical_counts ({n} items, m=10)", t_np, t_cy)]


def bench_lda(n, d, repeat, rng):
    tokens = 20 * n
    topics = 5
    doc = np.sort(rng.integers(0, n, size=tokens)).astype(np.int32)
    word = rng.integers(0, d, size=tokens).astype(np.int32)

    def fresh_state():
        z = np.random.default_rng(1).integers(0, topics, size=tokens).astype(np.int32)
        n_iz = np.zeros((n, topics), dtype=np.int64)
        n_zw = np.zeros((topics, d), dtype=np.int64)
        n_z = np.zeros(topics, dtype=np.int64)
        np.add.at(n_iz, (doc, z), 1)
        np.add.at(n_zw, (z, word), 1)
        np.add.at(n_z, z, 1)
        return z, n_iz, n_zw, n_z

    def run(impl):
        z, n_iz, n_zw, n_z = fresh_state()
        u = np.random.default_rng(0).random(tokens)
        impl.lda_sweep(doc, word, z, n_iz, n_zw, n_z, 0.5, 0.1, u)
        return z

    t_np = _time(lambda: run(_numpy), (), repeat)
    t_cy = None
    if _core is not None:
        t_cy = _time(lambda: run(_core), (), repeat)
        assert np.array_equal(run(_core), run(_numpy))
    return [(f"lda_sweep ({tokens} tokens, 5 topics)", t_np, t_cy)]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000, help="items / matrix rows")
    parser.add_argument("--d", type=int, default=12, help="label count")
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats (best kept)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    if _core is None:
        print("compiled extension not available; timing numpy fallback only\n")

    rows = []
    rows += bench_divergence(args.n, args.d, args.repeat, rng)
    rows += bench_sampling(args.n, args.d, args.repeat, rng)
    rows += bench_lda(args.n, args.d, args.repeat, rng)

    width = max(len(name) for name, _, _ in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'cython':>10}  {'speedup':>8}")
    for name, t_np, t_cy in rows:
        if t_cy is None:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")
        else:
            print(f"{name:<{width}}  {t_np * 1e3:>8.2f}ms  {t_cy * 1e3:>8.2f}ms  {t_np / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
