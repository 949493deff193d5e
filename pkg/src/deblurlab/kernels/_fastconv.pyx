# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col / col2im for the convolution hot path.

col2im accumulates contributions in (ki, kj) ascending order per output
element, matching the NumPy reference backend bit for bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t n = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2]
    cdef Py_ssize_t wp = xp.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // stride + 1
    cdef Py_ssize_t ow = (wp - kw) // stride + 1

    cols_arr = np.empty((n, oh, ow, c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, :, :, ::1] cols = cols_arr
    cdef Py_ssize_t bi, ci, i, j, ki, kj, base_i, base_j

    for bi in range(n):
        for i in range(oh):
            base_i = i * stride
            for j in range(ow):
                base_j = j * stride
                for ci in range(c):
                    for ki in range(kh):
                        for kj in range(kw):
                            cols[bi, i, j, ci, ki, kj] = xp[bi, ci, base_i + ki, base_j + kj]
    return cols_arr


def col2im(double[:, :, :, :, :, ::1] cols, Py_ssize_t hp, Py_ssize_t wp, Py_ssize_t stride):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t oh = cols.shape[1]
    cdef Py_ssize_t ow = cols.shape[2]
    cdef Py_ssize_t c = cols.shape[3]
    cdef Py_ssize_t kh = cols.shape[4]
    cdef Py_ssize_t kw = cols.shape[5]

    out_arr = np.zeros((n, c, hp, wp), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t bi, ci, i, j, ki, kj

    for bi in range(n):
        for ci in range(c):
            for ki in range(kh):
                for kj in range(kw):
                    for i in range(oh):
                        for j in range(ow):
                            out[bi, ci, i * stride + ki, j * stride + kj] += cols[bi, i, j, ci, ki, kj]
    return out_arr
