#!/usr/bin/env python3
"""Time the compiled kernel backend against the pure-numpy fallback.

Each hot kernel ships in two implementations (see
``drift_adapt._kernels``): explicit loops, compiled with numba when it
is available and ``DRIFT_ADAPT_NUMBA`` is not 0/false/off/no, and a
vectorized numpy path.  This script times both on representative sizes,
verifies they agree, and prints a table.  Exit code 1 if any pair
disagrees.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N] [--large]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from drift_adapt import _kernels


def _best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _sym(n: int, seed: int) -> np.ndarray:
    g = np.random.default_rng(seed)
    a = g.standard_normal((n, n))
    return (a + a.T) / 2.0


def _spd(n: int, seed: int) -> np.ndarray:
    g = np.random.default_rng(seed)
    a = g.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def _jacobi_case(n: int):
    a0 = _sym(n, seed=n)

    def run(fn):
        a = a0.copy()
        v = np.eye(n)
        fn(a, v, 1e-12, 60)
        return np.sort(np.diag(a)), v

    def agree(ra, rb):
        vals_a, vec_a = ra
        vals_b, vec_b = rb
        scale = np.max(np.abs(vals_a)) + 1e-30
        ortho = np.max(np.abs(vec_a.T @ vec_a - np.eye(n)))
        return (np.allclose(vals_a, vals_b, rtol=1e-8, atol=1e-10 * scale)
                and ortho < 1e-9)

    return run, agree


def _cholesky_case(n: int):
    a = _spd(n, seed=n + 1)
    out = np.zeros_like(a)

    def run(fn):
        status = fn(a, out)
        assert status == 0
        return out.copy()

    def agree(ra, rb):
        return np.allclose(ra, rb, rtol=1e-10, atol=1e-12)

    return run, agree


def _solve_case(n: int, k: int):
    lo = np.linalg.cholesky(_spd(n, seed=n + 2))
    b = np.random.default_rng(n + 3).standard_normal((n, k))
    x = np.zeros_like(b)

    def run(fn):
        fn(lo, b, x)
        return x.copy()

    def agree(ra, rb):
        return np.allclose(ra, rb, rtol=1e-10, atol=1e-12)

    return run, agree


def _pairwise_case(n: int, m: int, d: int):
    g = np.random.default_rng(7)
    x = g.standard_normal((n, d))
    y = g.standard_normal((m, d))
    out = np.zeros((n, m))

    def run(fn):
        fn(x, y, out)
        return out.copy()

    def agree(ra, rb):
        return np.allclose(ra, rb, rtol=1e-9, atol=1e-9)

    return run, agree


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3,
                        help="timing repeats per kernel, best is reported")
    parser.add_argument("--large", action="store_true",
                        help="use larger problem sizes")
    args = parser.parse_args(argv)

    compiled = _kernels.backend() == "numba"
    loops_label = "numba" if compiled else "py-loops"
    # the uncompiled loop path is orders of magnitude slower; keep the
    # fallback benchmark small enough to finish promptly
    if args.large:
        jacobi_sizes, chol_sizes = [96, 192], [256, 512]
    elif compiled:
        jacobi_sizes, chol_sizes = [48, 96], [128, 384]
    else:
        jacobi_sizes, chol_sizes = [24, 48], [64, 128]

    cases = []
    for n in jacobi_sizes:
        run, agree = _jacobi_case(n)
        cases.append((f"jacobi_rotate {n}x{n}", run, agree,
                      _kernels._jacobi_rotate_jit, _kernels._jacobi_rotate_numpy))
    for n in chol_sizes:
        run, agree = _cholesky_case(n)
        cases.append((f"cholesky {n}x{n}", run, agree,
                      _kernels._cholesky_jit, _kernels._cholesky_numpy))
    n = 384 if compiled or args.large else 96
    run, agree = _solve_case(n, 32)
    cases.append((f"solve_lower {n}x{n}, 32 rhs", run, agree,
                  _kernels._solve_lower_jit, _kernels._solve_lower_numpy))
    run, agree = _solve_case(n, 32)
    cases.append((f"solve_upper {n}x{n}, 32 rhs", run, agree,
                  lambda lo, b, x: _kernels._solve_upper_jit(lo.T.copy(), b, x),
                  lambda lo, b, x: _kernels._solve_upper_numpy(lo.T.copy(), b, x)))
    nm = (800, 600, 64) if compiled or args.large else (200, 150, 32)
    run, agree = _pairwise_case(*nm)
    cases.append((f"pairwise_sq_dists {nm[0]}x{nm[1]}x{nm[2]}", run, agree,
                  _kernels._pairwise_sq_dists_jit, _kernels._pairwise_sq_dists_numpy))

    _kernels.warm_up()
    print(f"active backend: {_kernels.backend()} "
          f"(loops column runs {'compiled numba' if compiled else 'plain python'})\n")
    header = f"{'kernel':<34} {loops_label:>12} {'numpy':>12} {'ratio':>8}  agree"
    print(header)
    print("-" * len(header))

    all_ok = True
    for label, run, agree, loops_fn, numpy_fn in cases:
        result_loops = run(loops_fn)
        result_numpy = run(numpy_fn)
        ok = agree(result_loops, result_numpy)
        all_ok &= ok
        t_loops = _best_of(lambda: run(loops_fn), args.repeats)
        t_numpy = _best_of(lambda: run(numpy_fn), args.repeats)
        ratio = t_numpy / t_loops if t_loops > 0 else float("inf")
        print(f"{label:<34} {t_loops:>11.5f}s {t_numpy:>11.5f}s {ratio:>7.1f}x"
              f"  {'ok' if ok else 'MISMATCH'}")

    if not all_ok:
        print("\nbackend disagreement detected", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
