"""Assembly kernel selection: compiled extension if available, numpy otherwise.

Set ``CARTFEM_PURE_PYTHON=1`` to force the numpy lane. ``kernel_lane()``
reports which implementation is active; ``benchmarks/bench_assembly.py``
compares the two.
"""

import os

import numpy as np

if os.environ.get("CARTFEM_PURE_PYTHON", "") == "1":
    from . import _kernels_py as _impl

    _LANE = "python"
else:
    try:
        from . import _kernels as _impl

        _LANE = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        _LANE = "python"


def kernel_lane():
    return _LANE


def bilinear_accumulate(vals, w):
    """Reduce integrand tables (C, ni, nj, Q) against quadrature weights (Q,)."""
    if _LANE == "compiled":
        vals = np.ascontiguousarray(vals)
    return _impl.bilinear_accumulate(vals, w)


def linear_accumulate(vals, w):
    """Reduce integrand tables (C, ni, Q) against quadrature weights (Q,)."""
    if _LANE == "compiled":
        vals = np.ascontiguousarray(vals)
    return _impl.linear_accumulate(vals, w)


def scatter_bilinear(ke, rows, cols, dir_vals, rhs, out_r, out_c, out_v):
    """Emit COO triplets for free (row, col) pairs; fold constrained columns
    into the right hand side. Returns the number of triplets written."""
    return _impl.scatter_bilinear(
        np.ascontiguousarray(ke), rows, cols, dir_vals, rhs, out_r, out_c, out_v
    )


def scatter_linear(fe, rows, rhs):
    """Accumulate elemental vectors (C, ni) into the free right hand side."""
    _impl.scatter_linear(np.ascontiguousarray(fe), rows, rhs)
