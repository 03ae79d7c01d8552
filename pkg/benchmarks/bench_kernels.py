"""Time the numba kernels against their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel runs on identical inputs through both paths; outputs are
checked for agreement before timing. The numba column is skipped when
numba is missing or MPQA_DISABLE_NUMBA=1 is set.
"""

import argparse
import timeit

import numpy as np

from mpqa import _kernels as K


def span_inputs(rng, n_passages, length):
    offsets = np.arange(n_passages + 1, dtype=np.int64) * (length + 1)
    return rng.normal(size=offsets[-1]), rng.normal(size=offsets[-1]), offsets, 30


def bm25_inputs(rng, n_docs, n_postings):
    idx = np.sort(rng.choice(n_docs, size=n_postings, replace=False)).astype(np.int64)
    tfs = rng.integers(1, 8, size=n_postings).astype(np.int64)
    lens = rng.integers(20, 150, size=n_docs).astype(np.float64)
    return n_docs, idx, tfs, lens


def bench(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"backend selected at import: {K.BACKEND}")
    print(f"{'kernel':<34}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")

    for n_passages, length in [(1, 100), (30, 100), (100, 200)]:
        x = span_inputs(rng, n_passages, length)
        t_np = bench(K.span_table_numpy, x, args.repeat)
        name = f"span_table {n_passages}x{length}"
        if K.HAS_NUMBA:
            for a, b in zip(K.span_table_numpy(*x), K.span_table_numba(*x)):
                np.testing.assert_array_equal(a, b)
            t_nb = bench(K.span_table_numba, x, args.repeat)
            print(f"{name:<34}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<34}{t_np * 1e3:>10.3f}{'-':>10}{'-':>9}")

    for n_docs, n_post in [(1_000, 100), (100_000, 5_000), (1_000_000, 200_000)]:
        n, idx, tfs, lens = bm25_inputs(rng, n_docs, n_post)
        avg = float(lens.mean())

        def run(fn):
            scores = np.zeros(n)
            fn(scores, idx, tfs, 1.7, lens, avg, 1.2, 0.75)
            return scores

        name = f"bm25_accumulate {n_post} of {n_docs}"
        t_np = bench(run, (K.bm25_accumulate_numpy,), args.repeat)
        if K.HAS_NUMBA:
            np.testing.assert_allclose(run(K.bm25_accumulate_numpy), run(K.bm25_accumulate_numba), atol=1e-12)
            t_nb = bench(run, (K.bm25_accumulate_numba,), args.repeat)
            print(f"{name:<34}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<34}{t_np * 1e3:>10.3f}{'-':>10}{'-':>9}")


if __name__ == "__main__":
    main()
