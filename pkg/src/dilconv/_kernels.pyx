# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter kernels for dilated, strided convolution.

Column layout matches ``_fallback``: row ``(b*out_rows + r)*out_cols + w``,
column ``(c*fr + i)*fc + j``. ``col2im`` accumulates taps in (i, j) order so
results are bitwise equal to the fallback.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] xp, Py_ssize_t fr, Py_ssize_t fc,
           Py_ssize_t dr, Py_ssize_t dc, Py_ssize_t sr, Py_ssize_t sc,
           Py_ssize_t out_rows, Py_ssize_t out_cols):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t ncol = C * fr * fc
    out = np.empty((B * out_rows * out_cols, ncol), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t b, r, w, c, i, j, row, col, r0, w0
    with nogil:
        for b in range(B):
            for r in range(out_rows):
                r0 = r * sr
                for w in range(out_cols):
                    w0 = w * sc
                    row = (b * out_rows + r) * out_cols + w
                    col = 0
                    for c in range(C):
                        for i in range(fr):
                            for j in range(fc):
                                cols[row, col] = xp[b, c, r0 + i * dr, w0 + j * dc]
                                col = col + 1
    return out


def col2im(const double[:, ::1] cols, Py_ssize_t B, Py_ssize_t C,
           Py_ssize_t rows_p, Py_ssize_t cols_p, Py_ssize_t fr, Py_ssize_t fc,
           Py_ssize_t dr, Py_ssize_t dc, Py_ssize_t sr, Py_ssize_t sc,
           Py_ssize_t out_rows, Py_ssize_t out_cols):
    out = np.zeros((B, C, rows_p, cols_p), dtype=np.float64)
    cdef double[:, :, :, ::1] dxp = out
    cdef Py_ssize_t b, c, i, j, r, w, col, row, ri, wj
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(fr):
                    for j in range(fc):
                        col = (c * fr + i) * fc + j
                        for r in range(out_rows):
                            ri = r * sr + i * dr
                            row = (b * out_rows + r) * out_cols
                            for w in range(out_cols):
                                wj = w * sc + j * dc
                                dxp[b, c, ri, wj] += cols[row + w, col]
    return out


cdef extern from "gemm_kernel.h" nogil:
    void dc_gemm(const double *A, const double *B, double *C, Py_ssize_t M, Py_ssize_t K, Py_ssize_t N)


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t M = a.shape[0], K = a.shape[1], N = b.shape[1]
    if b.shape[0] != K:
        raise ValueError(f"inner dimensions disagree: {K} vs {b.shape[0]}")
    out = np.zeros((M, N), dtype=np.float64)
    cdef double[:, ::1] c = out
    if M == 0 or N == 0 or K == 0:
        return out
    with nogil:
        dc_gemm(&a[0, 0], &b[0, 0], &c[0, 0], M, K, N)
    return out
