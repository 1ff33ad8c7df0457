"""Hot numerical kernels with two interchangeable backends.

The loop implementations below are compiled with numba when it is
importable and the environment variable ``DRIFT_ADAPT_NUMBA`` is not one
of ``0/false/off/no``.  Otherwise a vectorized pure-numpy path is used.
Both paths implement the same arithmetic; ``benchmarks/bench_kernels.py``
times them against each other and checks agreement.

All kernels mutate preallocated float64 C-contiguous arrays and return
status codes instead of raising, so the same source works under numba.
Validation and exceptions live in :mod:`drift_adapt.linalg`.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _jacobi_rotate_loops(a, v, tol, max_sweeps):
    """Cyclic Jacobi sweeps on symmetric ``a``, accumulating rotations in ``v``.

    Diagonalizes ``a`` in place.  Returns the number of completed sweeps,
    or -1 if the off-diagonal Frobenius norm is still above ``tol`` after
    ``max_sweeps`` sweeps.
    """
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if math.sqrt(2.0 * off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # once an entry is below one ulp of both diagonal entries a
                # rotation would be pure noise; zero it and move on
                if sweep >= 4:
                    small = 100.0 * abs(apq)
                    if (
                        abs(a[p, p]) + small == abs(a[p, p])
                        and abs(a[q, q]) + small == abs(a[q, q])
                    ):
                        a[p, q] = 0.0
                        a[q, p] = 0.0
                        continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    off = 0.0
    for p in range(n - 1):
        for q in range(p + 1, n):
            off += a[p, q] * a[p, q]
    if math.sqrt(2.0 * off) <= tol:
        return max_sweeps
    return -1


def _jacobi_rotate_numpy(a, v, tol, max_sweeps):
    n = a.shape[0]
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps):
        if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if sweep >= 4:
                    small = 100.0 * abs(apq)
                    if (
                        abs(a[p, p]) + small == abs(a[p, p])
                        and abs(a[q, q]) + small == abs(a[q, q])
                    ):
                        a[p, q] = 0.0
                        a[q, p] = 0.0
                        continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if math.sqrt(2.0 * float(np.sum(a[iu] ** 2))) <= tol:
        return max_sweeps
    return -1


def _cholesky_loops(a, out):
    """Lower Cholesky factor of ``a`` into ``out`` (zero-initialized).

    Returns 0 on success, or the 1-based index of the first non-positive
    pivot on failure.
    """
    n = a.shape[0]
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if s <= 0.0:
            return j + 1
        d = math.sqrt(s)
        out[j, j] = d
        for i in range(j + 1, n):
            acc = a[i, j]
            for k in range(j):
                acc -= out[i, k] * out[j, k]
            out[i, j] = acc / d
    return 0


def _cholesky_numpy(a, out):
    n = a.shape[0]
    for j in range(n):
        s = a[j, j] - float(out[j, :j] @ out[j, :j])
        if s <= 0.0:
            return j + 1
        d = math.sqrt(s)
        out[j, j] = d
        if j + 1 < n:
            out[j + 1:, j] = (a[j + 1:, j] - out[j + 1:, :j] @ out[j, :j]) / d
    return 0


def _solve_lower_loops(lo, b, x):
    """Forward substitution: solve ``lo @ x = b`` for ``x`` (both n-by-m)."""
    n = b.shape[0]
    m = b.shape[1]
    for col in range(m):
        for i in range(n):
            acc = b[i, col]
            for k in range(i):
                acc -= lo[i, k] * x[k, col]
            x[i, col] = acc / lo[i, i]


def _solve_lower_numpy(lo, b, x):
    n = b.shape[0]
    for i in range(n):
        x[i, :] = (b[i, :] - lo[i, :i] @ x[:i, :]) / lo[i, i]


def _solve_upper_loops(up, b, x):
    """Back substitution: solve ``up @ x = b`` for ``x`` (both n-by-m)."""
    n = b.shape[0]
    m = b.shape[1]
    for col in range(m):
        for i in range(n - 1, -1, -1):
            acc = b[i, col]
            for k in range(i + 1, n):
                acc -= up[i, k] * x[k, col]
            x[i, col] = acc / up[i, i]


def _solve_upper_numpy(up, b, x):
    n = b.shape[0]
    for i in range(n - 1, -1, -1):
        x[i, :] = (b[i, :] - up[i, i + 1:] @ x[i + 1:, :]) / up[i, i]


def _pairwise_sq_dists_loops(x, y, out):
    """Squared Euclidean distances between rows of ``x`` and rows of ``y``."""
    n = x.shape[0]
    m = y.shape[0]
    d = x.shape[1]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - y[j, k]
                acc += diff * diff
            out[i, j] = acc


def _pairwise_sq_dists_numpy(x, y, out):
    np.dot(x, y.T, out=out)
    out *= -2.0
    out += np.sum(x * x, axis=1)[:, None]
    out += np.sum(y * y, axis=1)[None, :]
    # the expanded form can go slightly negative through cancellation
    np.maximum(out, 0.0, out=out)


_FLAG = os.environ.get("DRIFT_ADAPT_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in {"0", "false", "off", "no"}

if _WANT_NUMBA:
    try:
        from numba import njit
    except ImportError:
        njit = None
else:
    njit = None

if njit is not None:
    BACKEND = "numba"
    _jacobi_rotate_jit = njit(cache=True)(_jacobi_rotate_loops)
    _cholesky_jit = njit(cache=True)(_cholesky_loops)
    _solve_lower_jit = njit(cache=True)(_solve_lower_loops)
    _solve_upper_jit = njit(cache=True)(_solve_upper_loops)
    _pairwise_sq_dists_jit = njit(cache=True)(_pairwise_sq_dists_loops)
else:
    BACKEND = "numpy"
    _jacobi_rotate_jit = _jacobi_rotate_loops
    _cholesky_jit = _cholesky_loops
    _solve_lower_jit = _solve_lower_loops
    _solve_upper_jit = _solve_upper_loops
    _pairwise_sq_dists_jit = _pairwise_sq_dists_loops


def backend() -> str:
    """Name of the active backend, ``numba`` or ``numpy``."""
    return BACKEND


def jacobi_rotate(a, v, tol, max_sweeps):
    if BACKEND == "numba":
        return _jacobi_rotate_jit(a, v, tol, max_sweeps)
    return _jacobi_rotate_numpy(a, v, tol, max_sweeps)


def cholesky_inplace(a, out):
    if BACKEND == "numba":
        return _cholesky_jit(a, out)
    return _cholesky_numpy(a, out)


def solve_lower_inplace(lo, b, x):
    if BACKEND == "numba":
        _solve_lower_jit(lo, b, x)
    else:
        _solve_lower_numpy(lo, b, x)


def solve_upper_inplace(up, b, x):
    if BACKEND == "numba":
        _solve_upper_jit(up, b, x)
    else:
        _solve_upper_numpy(up, b, x)


def pairwise_sq_dists_inplace(x, y, out):
    if BACKEND == "numba":
        _pairwise_sq_dists_jit(x, y, out)
    else:
        _pairwise_sq_dists_numpy(x, y, out)


def warm_up() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    v = np.eye(2)
    jacobi_rotate(a.copy(), v, 1e-12, 5)
    lo = np.zeros((2, 2))
    cholesky_inplace(a, lo)
    b = np.ones((2, 1))
    x = np.zeros((2, 1))
    solve_lower_inplace(lo, b, x)
    solve_upper_inplace(lo.T.copy(), b, x)
    out = np.zeros((2, 2))
    pairwise_sq_dists_inplace(a, a, out)
