"""Backend agreement tests for the hot kernels.

Each kernel ships as a loop implementation (numba-compiled when available)
and a vectorized numpy implementation.  The two must agree to floating
point noise on the same inputs, and the env flag must select the backend.
"""

import os
import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from drift_adapt import _kernels


def _random_spd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def _random_sym(rng, n):
    m = rng.standard_normal((n, n))
    return (m + m.T) / 2.0


class TestJacobi:
    @pytest.mark.parametrize("n", [2, 5, 12, 30])
    def test_loops_and_numpy_agree(self, n):
        rng = np.random.default_rng(n)
        a = _random_sym(rng, n)
        a1, v1 = a.copy(), np.eye(n)
        a2, v2 = a.copy(), np.eye(n)
        r1 = _kernels._jacobi_rotate_loops(a1, v1, 1e-12, 60)
        r2 = _kernels._jacobi_rotate_numpy(a2, v2, 1e-12, 60)
        assert r1 >= 0 and r2 >= 0
        npt.assert_allclose(a1, a2, atol=1e-12)
        npt.assert_allclose(v1, v2, atol=1e-12)

    def test_diagonalizes_and_matches_numpy_eigh(self):
        rng = np.random.default_rng(7)
        a = _random_sym(rng, 20)
        work, v = a.copy(), np.eye(20)
        sweeps = _kernels.jacobi_rotate(work, v, 1e-12, 60)
        assert sweeps >= 0
        off = work - np.diag(np.diag(work))
        assert np.linalg.norm(off) <= 1e-9 * np.linalg.norm(a)
        # rotations stay orthogonal and reconstruct the input
        npt.assert_allclose(v.T @ v, np.eye(20), atol=1e-12)
        npt.assert_allclose(v @ work @ v.T, a, atol=1e-10)
        npt.assert_allclose(
            np.sort(np.diag(work)), np.linalg.eigvalsh(a), rtol=1e-10, atol=1e-10
        )

    def test_reports_failure_when_sweeps_exhausted(self):
        rng = np.random.default_rng(3)
        a = _random_sym(rng, 12)
        assert _kernels.jacobi_rotate(a.copy(), np.eye(12), 1e-14, 1) == -1

    def test_already_diagonal_needs_zero_sweeps(self):
        a = np.diag([3.0, 1.0, 2.0])
        assert _kernels.jacobi_rotate(a.copy(), np.eye(3), 1e-12, 10) == 0


class TestCholesky:
    @pytest.mark.parametrize("n", [1, 2, 6, 25])
    def test_loops_and_numpy_agree(self, n):
        rng = np.random.default_rng(10 + n)
        a = _random_spd(rng, n)
        out1 = np.zeros_like(a)
        out2 = np.zeros_like(a)
        assert _kernels._cholesky_loops(a, out1) == 0
        assert _kernels._cholesky_numpy(a, out2) == 0
        npt.assert_allclose(out1, out2, atol=1e-12)
        npt.assert_allclose(out1, np.linalg.cholesky(a), rtol=1e-10, atol=1e-12)

    def test_pivot_code_is_one_based(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        for fn in (_kernels._cholesky_loops, _kernels._cholesky_numpy):
            assert fn(bad, np.zeros((2, 2))) == 2
            assert fn(np.array([[-1.0]]), np.zeros((1, 1))) == 1
            assert fn(np.zeros((3, 3)), np.zeros((3, 3))) == 1


class TestTriangularSolves:
    @pytest.mark.parametrize("m", [1, 4])
    def test_against_dense_solve(self, m):
        rng = np.random.default_rng(42)
        n = 15
        lo = np.tril(rng.standard_normal((n, n)))
        np.fill_diagonal(lo, rng.uniform(1.0, 2.0, n))
        b = rng.standard_normal((n, m))
        for fn in (_kernels._solve_lower_loops, _kernels._solve_lower_numpy):
            x = np.zeros((n, m))
            fn(lo, b, x)
            npt.assert_allclose(x, np.linalg.solve(lo, b), rtol=1e-10, atol=1e-12)
        up = lo.T.copy()
        for fn in (_kernels._solve_upper_loops, _kernels._solve_upper_numpy):
            x = np.zeros((n, m))
            fn(up, b, x)
            npt.assert_allclose(x, np.linalg.solve(up, b), rtol=1e-10, atol=1e-12)

    def test_loops_and_numpy_agree(self):
        rng = np.random.default_rng(5)
        n = 20
        lo = np.tril(rng.standard_normal((n, n))) + 3.0 * np.eye(n)
        b = rng.standard_normal((n, 3))
        x1 = np.zeros((n, 3))
        x2 = np.zeros((n, 3))
        _kernels._solve_lower_loops(lo, b, x1)
        _kernels._solve_lower_numpy(lo, b, x2)
        npt.assert_allclose(x1, x2, atol=1e-13)


class TestPairwiseSqDists:
    def test_loops_and_numpy_agree(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((30, 6))
        y = rng.standard_normal((17, 6))
        out1 = np.zeros((30, 17))
        out2 = np.zeros((30, 17))
        _kernels._pairwise_sq_dists_loops(x, y, out1)
        _kernels._pairwise_sq_dists_numpy(x, y, out2)
        ref = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=2)
        npt.assert_allclose(out1, ref, rtol=1e-10, atol=1e-10)
        npt.assert_allclose(out2, ref, rtol=1e-10, atol=1e-10)

    def test_self_distances_nonnegative_with_zero_diagonal(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((25, 4)) * 1e3
        out = np.zeros((25, 25))
        _kernels.pairwise_sq_dists_inplace(x, x, out)
        assert np.all(out >= 0.0)
        npt.assert_allclose(np.diag(out), 0.0, atol=1e-6)


class TestBackendSelection:
    def test_backend_name_is_valid(self):
        assert _kernels.backend() in {"numba", "numpy"}
        assert _kernels.backend() == _kernels.BACKEND

    @pytest.mark.parametrize("flag", ["0", "false", "off", "no"])
    def test_env_flag_forces_numpy(self, flag):
        env = dict(os.environ, DRIFT_ADAPT_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, "-c",
             "from drift_adapt import _kernels; print(_kernels.backend())"],
            env=env, capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "numpy"

    def test_dispatch_matches_selected_implementation(self):
        rng = np.random.default_rng(2)
        a = _random_spd(rng, 8)
        via_dispatch = np.zeros_like(a)
        direct = np.zeros_like(a)
        assert _kernels.cholesky_inplace(a, via_dispatch) == 0
        if _kernels.BACKEND == "numba":
            assert _kernels._cholesky_jit(a, direct) == 0
        else:
            assert _kernels._cholesky_numpy(a, direct) == 0
        npt.assert_array_equal(via_dispatch, direct)
