"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--nodes 2000] [--dim 16] [--repeat 3]

Covers the kernels that dominate pipeline runtime: pairwise-mean threshold
estimation, adjacency construction, CSR matmul, the fused attention pass,
neighborhood pooling, and SMOTE neighbor search.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from triagegraph import kernels


def _timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def build_cases(n, dim, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim)) * 0.9 + 0.05
    with kernels.use_backend(kernels.available_backends()[-1]):
        tau = kernels.pairwise_mean(X, kernels.COSINE)
        indptr, indices, weights = kernels.build_adjacency(X, kernels.COSINE, tau)
    e = indices.size
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    H = rng.random((n, 64))
    heads, dh = 4, 8
    left = rng.normal(size=(n, heads * dh))
    right = rng.normal(size=(n, heads * dh))
    att = rng.normal(size=(heads, dh))
    g = rng.normal(size=(n, heads * dh))
    with kernels.use_backend(kernels.available_backends()[-1]):
        alpha, _ = kernels.gat_forward(left, right, att, indptr, indices, dst, 0.2)

    return {
        "pairwise_mean": lambda: kernels.pairwise_mean(X, kernels.EUCLIDEAN),
        "build_adjacency": lambda: kernels.build_adjacency(X, kernels.COSINE, tau),
        f"spmm ({e} nnz x 64)": lambda: kernels.spmm(indptr, indices, weights, H),
        "gat_forward": lambda: kernels.gat_forward(left, right, att, indptr, indices, dst, 0.2),
        "gat_backward": lambda: kernels.gat_backward(g, left, right, att, alpha, indptr, indices, dst, 0.2),
        "neighbor_max": lambda: kernels.neighbor_max(H, indices, indptr),
        "knn_indices (k=5)": lambda: kernels.knn_indices(X, 5),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"nodes={args.nodes} dim={args.dim} backends={backends}")
    cases = build_cases(args.nodes, args.dim)

    # warm up JIT compilation outside the timed region
    if "numba" in backends:
        with kernels.use_backend("numba"):
            for fn in cases.values():
                fn()

    width = max(len(name) for name in cases)
    header = f"{'kernel':<{width}}" + "".join(f"  {be:>12}" for be in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, fn in cases.items():
        times = {}
        for be in backends:
            with kernels.use_backend(be):
                times[be] = _timeit(fn, args.repeat)
        row = f"{name:<{width}}" + "".join(f"  {times[be] * 1e3:>10.2f}ms" for be in backends)
        if len(backends) == 2:
            row += f"  {times['numpy'] / times['numba']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
