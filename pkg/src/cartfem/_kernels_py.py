"""Pure-numpy assembly kernels, interchangeable with the compiled lane.

Triplets come out in cell-major, row-major, column-major order so matrices
assembled through either lane are identical entry for entry.
"""

import numpy as np


def bilinear_accumulate(vals, w):
    return np.einsum("cijq,q->cij", vals, w, optimize=True)


def linear_accumulate(vals, w):
    return np.einsum("ciq,q->ci", vals, w, optimize=True)


def scatter_bilinear(ke, rows, cols, dir_vals, rhs, out_r, out_c, out_v):
    C, ni, nj = ke.shape
    r3 = np.broadcast_to(rows[:, :, None], (C, ni, nj)).reshape(-1)
    c3 = np.broadcast_to(cols[:, None, :], (C, ni, nj)).reshape(-1)
    v3 = ke.reshape(-1)
    row_free = r3 >= 0
    keep = row_free & (c3 >= 0)
    k = int(np.count_nonzero(keep))
    out_r[:k] = r3[keep]
    out_c[:k] = c3[keep]
    out_v[:k] = v3[keep]
    fold = row_free & (c3 < 0)
    if np.any(fold):
        np.add.at(rhs, r3[fold], -v3[fold] * dir_vals[-1 - c3[fold]])
    return k


def scatter_linear(fe, rows, rhs):
    r = rows.reshape(-1)
    keep = r >= 0
    np.add.at(rhs, r[keep], fe.reshape(-1)[keep])
