#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-Python kernel backends.

Runs the covariance-matrix hot path over value-only and mixed-derivative
query sets at several sizes and prints per-call times plus the speedup of
the compiled extension.  Select the pure backend for a run of this script
(or anything else) with FIDBO_PURE_PYTHON=1.

Usage: python3 benchmarks/bench_kernels.py [--sizes 50,100,200] [--repeat 5]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


def _load_backend(pure):
    os.environ["FIDBO_PURE_PYTHON"] = "1" if pure else ""
    for mod in list(sys.modules):
        if mod.startswith("fidbo"):
            del sys.modules[mod]
    kernels = importlib.import_module("fidbo.kernels")
    return kernels


def _query_sets(kernels, n, dim, rng, mixed):
    X = rng.uniform(-2, 2, size=(n, dim))
    if not mixed:
        kinds = [kernels.VALUE] * n
    else:
        # Value and gradient kinds only: Hessian pairs are defined at
        # coincident points, not across a scattered query set.
        kinds = [
            kernels.VALUE if i % 2 == 0 else kernels.grad(i % dim)
            for i in range(n)
        ]
    return X, kernels.encode_kinds(kinds)


def bench(kernels, n, dim, repeat, mixed, seed=0):
    rng = np.random.default_rng(seed)
    spec = kernels.KernelSpec(2.0, np.full(dim, 0.7))
    X, kinds = _query_sets(kernels, n, dim, rng, mixed)
    kernels.cross_cov(X, kinds, X, kinds, spec)  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        K = kernels.cross_cov(X, kinds, X, kinds, spec)
        best = min(best, time.perf_counter() - t0)
    return best, K


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="50,100,200,400")
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    results = {}
    for pure in (False, True):
        kernels = _load_backend(pure)
        label = kernels.backend_name()
        print(f"backend: {label}")
        for mixed in (False, True):
            for n in sizes:
                t, K = bench(kernels, n, args.dim, args.repeat, mixed)
                kind = "mixed" if mixed else "value"
                results[(pure, mixed, n)] = (t, K)
                print(f"  {kind:6s} n={n:5d}  {t * 1e3:9.3f} ms")
    print("\nspeedup (pure / compiled):")
    for mixed in (False, True):
        for n in sizes:
            tc, Kc = results[(False, mixed, n)]
            tp, Kp = results[(True, mixed, n)]
            if not np.allclose(Kc, Kp, rtol=1e-12, atol=0):
                raise SystemExit("backend results disagree")
            kind = "mixed" if mixed else "value"
            print(f"  {kind:6s} n={n:5d}  {tp / tc:6.1f}x")


if __name__ == "__main__":
    main()
