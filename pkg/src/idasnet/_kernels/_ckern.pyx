# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: 3x3 im2col/col2im and the Gaussian-kernel
probability map. Single pass, no large temporaries."""

import numpy as np

from libc.math cimport exp, expf

ctypedef fused real:
    float
    double

cdef double SQRT_2PI = 2.5066282746310002


def im2col_k3(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.empty((n * h * w, c * 9), dtype=x.dtype)
    _im2col(x, out)
    return out


def col2im_k3(cols, n, c, h, w):
    cols = np.ascontiguousarray(cols)
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    _col2im(cols, out)
    return out


def kde_qhat(planes, offsets, bandwidth):
    planes = np.ascontiguousarray(planes)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    n, p, h, w = planes.shape
    out = np.zeros((n, h, w), dtype=planes.dtype)
    if p == 1:
        _kde_p1(planes, offsets, float(bandwidth), out)
    else:
        _kde(planes, offsets, float(bandwidth), out)
    k = offsets.shape[0]
    out *= 1.0 / (k * SQRT_2PI * float(bandwidth))
    return out


def _im2col(const real[:, :, :, ::1] x, real[:, ::1] out):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t b, ch, i, j, ky, kx, yy, xx, row, col
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    row = (b * h + i) * w + j
                    col = 0
                    for ch in range(c):
                        for ky in range(3):
                            yy = i + ky - 1
                            if 0 <= yy < h:
                                for kx in range(3):
                                    xx = j + kx - 1
                                    if 0 <= xx < w:
                                        out[row, col] = x[b, ch, yy, xx]
                                    else:
                                        out[row, col] = 0
                                    col += 1
                            else:
                                out[row, col] = 0
                                out[row, col + 1] = 0
                                out[row, col + 2] = 0
                                col += 3


def _col2im(const real[:, ::1] cols, real[:, :, :, ::1] out):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t b, ch, i, j, ky, kx, yy, xx, row, col
    with nogil:
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    row = (b * h + i) * w + j
                    col = 0
                    for ch in range(c):
                        for ky in range(3):
                            yy = i + ky - 1
                            if 0 <= yy < h:
                                for kx in range(3):
                                    xx = j + kx - 1
                                    if 0 <= xx < w:
                                        out[b, ch, yy, xx] += cols[row, col]
                                    col += 1
                            else:
                                col += 3


def _kde_p1(const real[:, :, :, ::1] x, const long[:, ::1] offsets, double bandwidth,
            real[:, :, ::1] out):
    # Single-plane fast path; accumulates the unscaled kernel sum into out.
    cdef Py_ssize_t n = x.shape[0], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t k = offsets.shape[0]
    cdef Py_ssize_t b, i, j, q, yy, dy, dx, j_lo, j_hi
    cdef double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    cdef float inv2h2f = <float>inv2h2
    cdef double d
    cdef float df
    with nogil:
        for q in range(k):
            dy = offsets[q, 0]
            dx = offsets[q, 1]
            j_lo = 0 if dx >= 0 else -dx
            j_hi = w if dx <= 0 else w - dx
            for b in range(n):
                for i in range(h):
                    yy = i + dy
                    if 0 <= yy < h:
                        if real is float:
                            for j in range(j_lo):
                                df = x[b, 0, i, j]
                                out[b, i, j] += expf(-df * df * inv2h2f)
                            for j in range(j_lo, j_hi):
                                df = x[b, 0, i, j] - x[b, 0, yy, j + dx]
                                out[b, i, j] += expf(-df * df * inv2h2f)
                            for j in range(j_hi, w):
                                df = x[b, 0, i, j]
                                out[b, i, j] += expf(-df * df * inv2h2f)
                        else:
                            for j in range(j_lo):
                                d = x[b, 0, i, j]
                                out[b, i, j] += exp(-d * d * inv2h2)
                            for j in range(j_lo, j_hi):
                                d = x[b, 0, i, j] - x[b, 0, yy, j + dx]
                                out[b, i, j] += exp(-d * d * inv2h2)
                            for j in range(j_hi, w):
                                d = x[b, 0, i, j]
                                out[b, i, j] += exp(-d * d * inv2h2)
                    else:
                        if real is float:
                            for j in range(w):
                                df = x[b, 0, i, j]
                                out[b, i, j] += expf(-df * df * inv2h2f)
                        else:
                            for j in range(w):
                                d = x[b, 0, i, j]
                                out[b, i, j] += exp(-d * d * inv2h2)


def _kde(const real[:, :, :, ::1] x, const long[:, ::1] offsets, double bandwidth,
         real[:, :, ::1] out):
    cdef Py_ssize_t n = x.shape[0], p = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t k = offsets.shape[0]
    cdef Py_ssize_t b, i, j, q, pl, yy, xx
    cdef double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    cdef float inv2h2f = <float>inv2h2
    cdef double d2, diff
    cdef float d2f, difff
    with nogil:
        for q in range(k):
            for b in range(n):
                for i in range(h):
                    yy = i + offsets[q, 0]
                    for j in range(w):
                        xx = j + offsets[q, 1]
                        if real is float:
                            d2f = 0.0
                            if 0 <= yy < h and 0 <= xx < w:
                                for pl in range(p):
                                    difff = x[b, pl, i, j] - x[b, pl, yy, xx]
                                    d2f += difff * difff
                            else:
                                for pl in range(p):
                                    difff = x[b, pl, i, j]
                                    d2f += difff * difff
                            out[b, i, j] += expf(-d2f * inv2h2f)
                        else:
                            d2 = 0.0
                            if 0 <= yy < h and 0 <= xx < w:
                                for pl in range(p):
                                    diff = x[b, pl, i, j] - x[b, pl, yy, xx]
                                    d2 += diff * diff
                            else:
                                for pl in range(p):
                                    diff = x[b, pl, i, j]
                                    d2 += diff * diff
                            out[b, i, j] += exp(-d2 * inv2h2)
