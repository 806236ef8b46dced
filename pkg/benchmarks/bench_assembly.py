"""Benchmark the compiled assembly kernels against the numpy fallback.

Two views:

* kernel microbenchmarks call both implementations directly on
  representative elemental blocks (quadrature reduction + COO scatter);
* end-to-end assembly runs ``assemble_affine`` in a subprocess per lane
  (the lane is chosen at import time via CARTFEM_PURE_PYTHON).

Usage: python benchmarks/bench_assembly.py [--quick]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np


def microbench(quick):
    from cartfem import _kernels_py as pyk

    try:
        from cartfem import _kernels as ck
    except ImportError:
        ck = None

    shapes = [
        ("poisson Q2 2D", (4096, 9, 9, 9)),
        ("elasticity Q1 3D", (2048, 24, 24, 8)),
        ("DG Q3 3D facet", (144, 64, 64, 16)),
    ]
    if quick:
        shapes = shapes[:1]
    rng = np.random.default_rng(0)
    print(f"{'case':>20} {'numpy reduce':>14} {'cython reduce':>14} "
          f"{'numpy scatter':>14} {'cython scatter':>15}")
    for name, (C, ni, nj, Q) in shapes:
        vals = rng.standard_normal((C, ni, nj, Q))
        w = rng.random(Q)
        rows = rng.integers(-4, C * ni // 2, size=(C, ni)).astype(np.int64)
        cols = rng.integers(-4, C * nj // 2, size=(C, nj)).astype(np.int64)
        dvals = rng.standard_normal(8)
        ke = pyk.bilinear_accumulate(vals, w)
        n = ke.size
        out = (np.empty(n, np.int64), np.empty(n, np.int64), np.empty(n, np.float64))

        def run_reduce(impl):
            return timeit.timeit(lambda: impl.bilinear_accumulate(vals, w), number=3) / 3

        def run_scatter(impl):
            def go():
                rhs = np.zeros(C * max(ni, nj))
                impl.scatter_bilinear(ke, rows, cols, dvals, rhs, *out)

            return timeit.timeit(go, number=3) / 3

        t_np_r = run_reduce(pyk)
        t_cy_r = run_reduce(ck) if ck else float("nan")
        t_np_s = run_scatter(pyk)
        t_cy_s = run_scatter(ck) if ck else float("nan")
        print(f"{name:>20} {t_np_r * 1e3:>12.2f}ms {t_cy_r * 1e3:>12.2f}ms "
              f"{t_np_s * 1e3:>12.2f}ms {t_cy_s * 1e3:>13.2f}ms")


_E2E_SNIPPET = """
import time
import cartfem as cf
import cartfem.kernels as k
n, order = {n}, 2
model = cf.cartesian_model((0, 1, 0, 1), (n, n))
V = cf.test_space(model, "Q", order, dirichlet_tags=["boundary"])
U = cf.trial_space(V, 0.0)
trian = cf.triangulation(model)
quad = cf.cell_quadrature(trian, 2 * order)
a = lambda u, v: cf.inner(cf.gradient(v), cf.gradient(u))
b = lambda v: v * 1.0
term = cf.AffineTerm(a, b, trian, quad)
cf.assemble_affine(U, V, term)  # warm up
t0 = time.perf_counter()
for _ in range(3):
    cf.assemble_affine(U, V, term)
print(f"{{k.kernel_lane()}} {{(time.perf_counter() - t0) / 3:.4f}}")
"""


def end_to_end(quick):
    n = 48 if quick else 128
    print(f"\nend-to-end Poisson Q2 assembly on a {n}x{n} mesh (mean of 3):")
    for env_val in ("0", "1"):
        env = dict(os.environ, CARTFEM_PURE_PYTHON=env_val)
        out = subprocess.run(
            [sys.executable, "-c", _E2E_SNIPPET.format(n=n)],
            capture_output=True,
            text=True,
            env=env,
        )
        if out.returncode != 0:
            print(out.stderr)
            raise SystemExit(1)
        lane, secs = out.stdout.split()
        print(f"  {lane:>8} lane: {float(secs) * 1e3:8.1f} ms")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    microbench(args.quick)
    end_to_end(args.quick)
