# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled vol2col / col2vol kernels (float32 and float64)."""

import numpy as np
cimport cython

ctypedef fused real:
    float
    double


def _vol2col(real[:, :, :, :, ::1] x, real[:, :, ::1] cols,
             int kt, int kh, int kw, int st, int sh, int sw):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1]
    cdef Py_ssize_t T = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t To = (T - kt) // st + 1
    cdef Py_ssize_t Ho = (H - kh) // sh + 1
    cdef Py_ssize_t Wo = (W - kw) // sw + 1
    cdef Py_ssize_t b, c, i, j, k, ot, oh, ow, row, col
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kt):
                    for j in range(kh):
                        for k in range(kw):
                            row = ((c * kt + i) * kh + j) * kw + k
                            col = 0
                            for ot in range(To):
                                for oh in range(Ho):
                                    for ow in range(Wo):
                                        cols[b, row, col] = x[b, c, ot * st + i, oh * sh + j, ow * sw + k]
                                        col = col + 1


def _col2vol(real[:, :, ::1] cols, real[:, :, :, :, ::1] out,
             int kt, int kh, int kw, int st, int sh, int sw):
    cdef Py_ssize_t B = out.shape[0], C = out.shape[1]
    cdef Py_ssize_t T = out.shape[2], H = out.shape[3], W = out.shape[4]
    cdef Py_ssize_t To = (T - kt) // st + 1
    cdef Py_ssize_t Ho = (H - kh) // sh + 1
    cdef Py_ssize_t Wo = (W - kw) // sw + 1
    cdef Py_ssize_t b, c, i, j, k, ot, oh, ow, row, col
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kt):
                    for j in range(kh):
                        for k in range(kw):
                            row = ((c * kt + i) * kh + j) * kw + k
                            col = 0
                            for ot in range(To):
                                for oh in range(Ho):
                                    for ow in range(Wo):
                                        out[b, c, ot * st + i, oh * sh + j, ow * sw + k] += cols[b, row, col]
                                        col = col + 1


def vol2col(x, int kt, int kh, int kw, int st, int sh, int sw):
    x = np.ascontiguousarray(x)
    B, C, T, H, W = x.shape
    To = (T - kt) // st + 1
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1
    cols = np.empty((B, C * kt * kh * kw, To * Ho * Wo), dtype=x.dtype)
    _vol2col(x, cols, kt, kh, kw, st, sh, sw)
    return cols


def col2vol(cols, shape, int kt, int kh, int kw, int st, int sh, int sw):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(shape, dtype=cols.dtype)
    _col2vol(cols, out, kt, kh, kw, st, sh, sw)
    return out
