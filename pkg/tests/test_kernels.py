"""Compiled and numpy assembly kernels must agree block for block."""

import numpy as np
import pytest

from cartfem import kernels
from cartfem import _kernels_py as pyk

compiled = pytest.importorskip("cartfem._kernels") if kernels.kernel_lane() == "compiled" else None

RNG = np.random.default_rng(7)


def _random_block(C=11, ni=5, nj=4, Q=6):
    vals = RNG.standard_normal((C, ni, nj, Q))
    w = RNG.random(Q)
    rows = RNG.integers(-3, 20, size=(C, ni)).astype(np.int64)
    cols = RNG.integers(-3, 20, size=(C, nj)).astype(np.int64)
    dvals = RNG.standard_normal(3)
    return vals, w, rows, cols, dvals


class TestLaneEquivalence:
    def test_bilinear_accumulate(self):
        vals, w, *_ = _random_block()
        a = pyk.bilinear_accumulate(vals, w)
        b = kernels.bilinear_accumulate(vals, w)
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)

    def test_linear_accumulate(self):
        vals = RNG.standard_normal((9, 6, 5))
        w = RNG.random(5)
        np.testing.assert_allclose(
            pyk.linear_accumulate(vals, w),
            kernels.linear_accumulate(vals, w),
            rtol=1e-14,
            atol=1e-15,
        )

    def test_scatter_bilinear_identical_triplets(self):
        vals, w, rows, cols, dvals = _random_block()
        ke = pyk.bilinear_accumulate(vals, w)
        n = ke.size
        outs = []
        for impl in (pyk, kernels):
            rhs = np.zeros(25)
            r = np.empty(n, dtype=np.int64)
            c = np.empty(n, dtype=np.int64)
            v = np.empty(n, dtype=np.float64)
            k = impl.scatter_bilinear(
                np.ascontiguousarray(ke), rows, cols, dvals, rhs, r, c, v
            )
            outs.append((k, r[:k].copy(), c[:k].copy(), v[:k].copy(), rhs))
        k1, r1, c1, v1, rhs1 = outs[0]
        k2, r2, c2, v2, rhs2 = outs[1]
        assert k1 == k2
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(v1, v2, rtol=1e-15)
        np.testing.assert_allclose(rhs1, rhs2, rtol=1e-13, atol=1e-14)

    def test_scatter_folds_dirichlet_columns(self):
        ke = np.ones((1, 1, 2))
        rows = np.array([[0]], dtype=np.int64)
        cols = np.array([[1, -1]], dtype=np.int64)  # second dof constrained, idx 0
        dvals = np.array([2.0])
        for impl in (pyk, kernels):
            rhs = np.zeros(2)
            r = np.empty(2, dtype=np.int64)
            c = np.empty(2, dtype=np.int64)
            v = np.empty(2, dtype=np.float64)
            k = impl.scatter_bilinear(ke, rows, cols, dvals, rhs, r, c, v)
            assert k == 1
            assert (r[0], c[0], v[0]) == (0, 1, 1.0)
            np.testing.assert_allclose(rhs, [-2.0, 0.0])

    def test_scatter_linear(self):
        fe = RNG.standard_normal((8, 3))
        rows = RNG.integers(-2, 6, size=(8, 3)).astype(np.int64)
        rhs1 = np.zeros(6)
        rhs2 = np.zeros(6)
        pyk.scatter_linear(fe, rows, rhs1)
        kernels.scatter_linear(fe, rows, rhs2)
        np.testing.assert_allclose(rhs1, rhs2, rtol=1e-14, atol=1e-15)


class TestLaneSelection:
    def test_active_lane_reported(self):
        assert kernels.kernel_lane() in ("compiled", "python")

    def test_env_override(self, monkeypatch):
        import subprocess
        import sys

        code = (
            "import cartfem.kernels as k; print(k.kernel_lane())"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"CARTFEM_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
            capture_output=True,
            text=True,
            cwd="/",
        )
        assert out.stdout.strip() == "python"
