"""Symmetric eigensolvers, Cholesky factorization, and scatter matrices.

Everything here is self-contained: the eigensolver is a cyclic Jacobi
iteration and the factorizations/substitutions sit on the kernels in
:mod:`drift_adapt._kernels`, so results are identical whichever backend
is active (up to the usual last-ulp noise between vectorized and scalar
summation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    ConvergenceError,
    DimensionError,
    NotPositiveDefiniteError,
    NotSymmetricError,
    SchemaError,
)

_SYM_RTOL = 1e-10
_JACOBI_TOL_FACTOR = 1e-12
_MAX_SWEEPS = 100


@dataclass
class EigenPairs:
    """Eigenvalues in descending order and matching unit-norm column vectors."""

    eigenvalues: np.ndarray
    vectors: np.ndarray


@dataclass
class ScatterSummary:
    """Within-domain and between-domain scatter of two feature samples.

    Scatters are sums of outer products of deviations (no 1/(n-1)
    normalization).  ``s_b`` is built from the two domain means around the
    pooled mean, so its rank is at most one.
    """

    s_w_s: np.ndarray
    s_w_t: np.ndarray
    s_b: np.ndarray
    mu_s: np.ndarray
    mu_t: np.ndarray
    mu: np.ndarray
    n_s: int
    n_t: int

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _as_square_sym(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if float(np.max(np.abs(a - a.T))) > _SYM_RTOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric within tolerance")
    return (a + a.T) / 2.0


def sym_eig(a: np.ndarray) -> EigenPairs:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Sweeps run until the off-diagonal Frobenius norm drops below
    1e-12 times the Frobenius norm of the input.  Eigenvalues come back
    sorted descending; each vector is unit norm with its largest-magnitude
    entry positive.

    Raises
    ------
    NotSymmetricError
        If ``a`` is not symmetric.
    ConvergenceError
        If the sweep budget is exhausted (does not happen for finite
        symmetric input in practice).
    """
    a = _as_square_sym(a, "a")
    n = a.shape[0]
    work = np.ascontiguousarray(a)
    vec = np.eye(n)
    tol = _JACOBI_TOL_FACTOR * float(np.linalg.norm(a))
    sweeps = _kernels.jacobi_rotate(work, vec, tol, _MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi sweeps did not converge in {_MAX_SWEEPS} sweeps")
    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vec = vec[:, order]
    return EigenPairs(vals, _fix_columns(vec))


def _fix_columns(vec: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vec, axis=0)
    norms[norms == 0.0] = 1.0
    vec = vec / norms
    for j in range(vec.shape[1]):
        i = int(np.argmax(np.abs(vec[:, j])))
        if vec[i, j] < 0.0:
            vec[:, j] = -vec[:, j]
    return vec


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with ``L @ L.T == a``.

    Raises NotPositiveDefiniteError carrying the 1-based pivot index when
    ``a`` is not positive definite.
    """
    a = _as_square_sym(a, "a")
    out = np.zeros_like(a)
    pivot = _kernels.cholesky_inplace(np.ascontiguousarray(a), out)
    if pivot:
        raise NotPositiveDefiniteError(pivot)
    return out


def solve_triangular(t: np.ndarray, b: np.ndarray, lower: bool = True) -> np.ndarray:
    """Solve ``t @ x = b`` for triangular ``t`` by substitution."""
    t = np.ascontiguousarray(np.asarray(t, dtype=np.float64))
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DimensionError(f"triangular factor must be square, got {t.shape}")
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != t.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, factor is {t.shape[0]}-by-{t.shape[0]}")
    if np.any(np.diag(t) == 0.0):
        raise DimensionError("triangular factor has a zero diagonal entry")
    x = np.zeros_like(b)
    b = np.ascontiguousarray(b)
    if lower:
        _kernels.solve_lower_inplace(t, b, x)
    else:
        _kernels.solve_upper_inplace(t, b, x)
    return x[:, 0] if squeeze else x


def generalized_eig(m: np.ndarray, b: np.ndarray) -> EigenPairs:
    """Solve ``m @ p = theta * b @ p`` for symmetric ``m`` and SPD ``b``.

    Reduced to a standard symmetric problem by Cholesky whitening:
    with ``b = L L^T``, the matrix ``C = L^{-1} m L^{-T}`` has the same
    eigenvalues, and ``p = L^{-T} y`` for each eigenvector ``y`` of ``C``.
    Vectors are renormalized to unit length after the back-transform, so
    they are B-orthogonal only up to scaling.
    """
    m = _as_square_sym(m, "m")
    b = _as_square_sym(b, "b")
    if m.shape != b.shape:
        raise DimensionError(f"matrix shapes differ: {m.shape} vs {b.shape}")
    lo = cholesky(b)
    y = solve_triangular(lo, m, lower=True)
    c = solve_triangular(lo, np.ascontiguousarray(y.T), lower=True)
    c = (c + c.T) / 2.0
    pairs = sym_eig(c)
    vecs = solve_triangular(np.ascontiguousarray(lo.T), pairs.vectors, lower=False)
    return EigenPairs(pairs.eigenvalues, _fix_columns(vecs))


def _matrix_values(x, name: str):
    values = getattr(x, "values", x)
    schema = getattr(x, "schema", None)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"{name} must be 2-d (impacts by features), got {values.shape}")
    if values.shape[0] < 1:
        raise DimensionError(f"{name} must contain at least one row")
    return values, schema


def scatter_summary(x_s, x_t) -> ScatterSummary:
    """Domain means and scatter matrices for a source/target feature pair.

    Accepts FeatureMatrix objects or plain 2-d arrays.  When both carry a
    schema the fingerprints must agree.
    """
    vs, schema_s = _matrix_values(x_s, "x_s")
    vt, schema_t = _matrix_values(x_t, "x_t")
    if vs.shape[1] != vt.shape[1]:
        raise DimensionError(
            f"feature dimensions differ: {vs.shape[1]} vs {vt.shape[1]}"
        )
    if schema_s is not None and schema_t is not None:
        if schema_s.fingerprint() != schema_t.fingerprint():
            raise SchemaError("source and target feature schemas differ")
    n_s, n_t = vs.shape[0], vt.shape[0]
    mu_s = vs.mean(axis=0)
    mu_t = vt.mean(axis=0)
    mu = (n_s * mu_s + n_t * mu_t) / (n_s + n_t)
    cs = vs - mu_s
    ct = vt - mu_t
    s_w_s = cs.T @ cs
    s_w_t = ct.T @ ct
    s_w_s = (s_w_s + s_w_s.T) / 2.0
    s_w_t = (s_w_t + s_w_t.T) / 2.0
    ds = mu_s - mu
    dt = mu_t - mu
    s_b = n_s * np.outer(ds, ds) + n_t * np.outer(dt, dt)
    return ScatterSummary(s_w_s, s_w_t, s_b, mu_s, mu_t, mu, n_s, n_t)
