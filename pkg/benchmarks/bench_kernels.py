"""Time each hot kernel under the compiled and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both backends run on identical inputs; outputs are compared before timing so a
speedup never hides a divergence.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from guesslearn import _fallback

try:
    from guesslearn import _kernels
except ImportError:
    _kernels = None


def _cases(rng):
    n_pool, dim, k, C = 10_000, 784, 7, 10
    pool_X = rng.random((n_pool, dim))
    x = rng.random(dim)

    def topk_state():
        d = np.sort(rng.random((n_pool, k)) * 20, axis=1)
        return d, rng.integers(0, C, (n_pool, k)), np.full(n_pool, k, dtype=np.int64)

    base_d, base_l, base_c = topk_state()
    store_X, store_y = rng.random((300, dim)), rng.integers(0, C, 300)
    queries = rng.random((1000, dim))
    X, y = rng.random((2000, dim)), rng.integers(0, C, 2000)
    # Embedding-like unit rows keep SGD stable; on raw [0,1]^784 rows with lr 0.1
    # the updates are chaotic and last-bit summation differences blow up.
    X_unit = X / np.linalg.norm(X, axis=1, keepdims=True)
    big_store_X, big_store_y = rng.random((5000, dim)), rng.integers(0, C, 5000)
    order = rng.permutation(2000).astype(np.int64)
    tie_u = rng.random(2000)
    names = rng.permuted(np.tile(np.arange(C, dtype=np.int64), (100_000, 1)), axis=1)
    guess_u = rng.random((100_000, C))

    def topk_insert(mod):
        d, l, c = base_d.copy(), base_l.copy(), base_c.copy()
        mod.knn_topk_insert(pool_X, x, 3, d, l, c)
        return d, l, c

    def perceptron(mod):
        W = np.zeros((C, dim + 1))
        n = mod.perceptron_pass(W, X, y, order, tie_u, 1.0)
        return W, n

    def softmax(mod):
        W = np.zeros((C, dim + 1))
        mod.softmax_pass(W, X_unit, y, order, 0.1)
        return W

    return {
        "knn_topk_insert (10000 rows, d=784)": topk_insert,
        "knn_vote (10000 rows, k=7)": lambda m: m.knn_vote(base_d, base_l, base_c, C, 1e-8),
        "knn_query (1 x 5000 store)":
            lambda m: m.knn_query(big_store_X, big_store_y, queries[:1], k, C, 1e-8),
        "knn_query (1000 x 300 store)": lambda m: m.knn_query(store_X, store_y, queries, k, C, 1e-8),
        "perceptron_pass (2000 x 784)": perceptron,
        "softmax_pass (2000 x 784, unit rows)": softmax,
        "mapping_errors (1e5 trials, C=10)": lambda m: m.mapping_errors(names, guess_u),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; run `pip install --no-build-isolation -e .`",
              file=sys.stderr)
        return 1

    rows = []
    for name, fn in _cases(np.random.default_rng(0)).items():
        agree = _same(fn(_fallback), fn(_kernels))
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "python_s": t_py, "cython_s": t_cy,
                     "speedup": t_py / t_cy, "outputs_agree": bool(agree)})

    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}  agree")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['python_s']:>9.4f}s  {r['cython_s']:>9.4f}s"
              f"  {r['speedup']:>7.1f}x  {r['outputs_agree']}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)
    return 0 if all(r["outputs_agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
