# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels: quadrature reduction of per-cell integrand
tables and scatter of elemental blocks into COO triplets.

Row/column indices use the convention: value >= 0 is a free dof index,
value < 0 encodes constrained dof ``-1 - index``. Triplets are emitted in
cell-major, row-major, column-major order, matching the numpy fallback in
``_kernels_py`` so both lanes build identical matrices.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def bilinear_accumulate(const double[:, :, :, :] vals, const double[:] w):
    """Ke[c,i,j] = sum_q vals[c,i,j,q] * w[q]."""
    cdef Py_ssize_t C = vals.shape[0], ni = vals.shape[1]
    cdef Py_ssize_t nj = vals.shape[2], Q = vals.shape[3]
    out = np.zeros((C, ni, nj), dtype=np.float64)
    cdef double[:, :, ::1] ke = out
    cdef Py_ssize_t c, i, j, q
    cdef double acc
    for c in range(C):
        for i in range(ni):
            for j in range(nj):
                acc = 0.0
                for q in range(Q):
                    acc += vals[c, i, j, q] * w[q]
                ke[c, i, j] = acc
    return out


def linear_accumulate(const double[:, :, :] vals, const double[:] w):
    """fe[c,i] = sum_q vals[c,i,q] * w[q]."""
    cdef Py_ssize_t C = vals.shape[0], ni = vals.shape[1], Q = vals.shape[2]
    out = np.zeros((C, ni), dtype=np.float64)
    cdef double[:, ::1] fe = out
    cdef Py_ssize_t c, i, q
    cdef double acc
    for c in range(C):
        for i in range(ni):
            acc = 0.0
            for q in range(Q):
                acc += vals[c, i, q] * w[q]
            fe[c, i] = acc
    return out


def scatter_bilinear(const double[:, :, ::1] ke,
                     const long long[:, :] rows,
                     const long long[:, :] cols,
                     const double[:] dir_vals,
                     double[:] rhs,
                     long long[:] out_r,
                     long long[:] out_c,
                     double[:] out_v):
    """Scatter elemental matrices into COO triplets over free dofs.

    Constrained columns are folded into ``rhs`` against ``dir_vals``;
    constrained rows are dropped. Returns the number of triplets written.
    """
    cdef Py_ssize_t C = ke.shape[0], ni = ke.shape[1], nj = ke.shape[2]
    cdef Py_ssize_t c, i, j, k = 0
    cdef long long r, s
    for c in range(C):
        for i in range(ni):
            r = rows[c, i]
            if r < 0:
                continue
            for j in range(nj):
                s = cols[c, j]
                if s >= 0:
                    out_r[k] = r
                    out_c[k] = s
                    out_v[k] = ke[c, i, j]
                    k += 1
                else:
                    rhs[r] -= ke[c, i, j] * dir_vals[-1 - s]
    return k


def scatter_linear(const double[:, ::1] fe,
                   const long long[:, :] rows,
                   double[:] rhs):
    """Accumulate elemental vectors into the free right hand side."""
    cdef Py_ssize_t C = fe.shape[0], ni = fe.shape[1]
    cdef Py_ssize_t c, i
    cdef long long r
    for c in range(C):
        for i in range(ni):
            r = rows[c, i]
            if r >= 0:
                rhs[r] += fe[c, i]
