# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled filter-bank kernels.

Every routine works on a C-contiguous ``(n, length)`` block and has the same
signature and semantics as its counterpart in :mod:`prism._kernels_py`.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _mirror(Py_ssize_t i, Py_ssize_t n) nogil:
    cdef Py_ssize_t period
    if n == 1:
        return 0
    period = 2 * n - 2
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


cdef void _row_axpy(const double* ext, const double* kernel, Py_ssize_t width,
                    double* out, Py_ssize_t length) noexcept nogil:
    # taps outer, time inner: each pass is a contiguous axpy the compiler vectorizes
    cdef Py_ssize_t t, i
    cdef double k
    for t in range(length):
        out[t] = 0.0
    for i in range(width):
        k = kernel[i]
        for t in range(length):
            out[t] += k * ext[t + i]


def smooth(const double[:, ::1] x, const double[::1] kernel, Py_ssize_t origin):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1], width = kernel.shape[0]
    cdef Py_ssize_t r, j, span = length + width - 1
    out_arr = np.empty((n, length), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[::1] src = np.empty(span, dtype=np.intp)
    cdef double[::1] ext = np.empty(span, dtype=np.float64)
    for j in range(span):
        src[j] = _mirror(j - origin, length)
    if n == 0 or length == 0:
        return out_arr
    with nogil:
        for r in range(n):
            for j in range(span):
                ext[j] = x[r, src[j]]
            _row_axpy(&ext[0], &kernel[0], width, &out[r, 0], length)
    return out_arr


def smooth_adjoint(const double[:, ::1] g, const double[::1] kernel, Py_ssize_t origin):
    cdef Py_ssize_t n = g.shape[0], length = g.shape[1], width = kernel.shape[0]
    cdef Py_ssize_t r, t, i, j, span = length + width - 1
    cdef double k
    out_arr = np.zeros((n, length), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[::1] src = np.empty(span, dtype=np.intp)
    cdef double[::1] ext = np.empty(span, dtype=np.float64)
    cdef double* e
    cdef const double* gr
    for j in range(span):
        src[j] = _mirror(j - origin, length)
    if n == 0 or length == 0:
        return out_arr
    with nogil:
        e = &ext[0]
        for r in range(n):
            gr = &g[r, 0]
            for j in range(span):
                e[j] = 0.0
            for i in range(width):
                k = kernel[i]
                for t in range(length):
                    e[t + i] += k * gr[t]
            for j in range(span):
                out[r, src[j]] += e[j]
    return out_arr


def ema(const double[:, ::1] x, double alpha):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1]
    cdef Py_ssize_t r, t
    cdef double keep = 1.0 - alpha
    out_arr = np.empty((n, length), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for r in range(n):
            out[r, 0] = x[r, 0]
            for t in range(1, length):
                out[r, t] = keep * out[r, t - 1] + alpha * x[r, t]
    return out_arr


def ema_adjoint(const double[:, ::1] g, double alpha):
    cdef Py_ssize_t n = g.shape[0], length = g.shape[1]
    cdef Py_ssize_t r, t
    cdef double keep = 1.0 - alpha
    cdef double acc
    out_arr = np.empty((n, length), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for r in range(n):
            acc = 0.0
            for t in range(length - 1, 0, -1):
                acc = g[r, t] + keep * acc
                out[r, t] = alpha * acc
            acc = g[r, 0] + keep * acc
            out[r, 0] = acc
    return out_arr
