# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch extraction for convolution and radix-2 FFT rows.

Same call signatures as :mod:`sslrecon._pykernels`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


cdef inline void _valid_range(Py_ssize_t n_out, Py_ssize_t n_in, Py_ssize_t offset,
                              Py_ssize_t stride, Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output indices o with 0 <= o*stride + offset < n_in
    cdef Py_ssize_t a = 0, b
    if offset < 0:
        a = (-offset + stride - 1) // stride
    b = (n_in - 1 - offset) // stride + 1 if n_in - 1 - offset >= 0 else 0
    if b > n_out:
        b = n_out
    if a > b:
        a = b
    lo[0] = a
    hi[0] = b


def im2col(const double[:, :, ::1] x, int k, int stride, int pad):
    """Unfold (C, H, W) into a (C*k*k, Ho*Wo) patch matrix with zero padding."""
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((c_in * k * k, ho * wo), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t c, ki, kj, i, j, row, src_i, i_lo, i_hi, j_lo, j_hi, base
    cdef double* dst
    cdef const double* src
    with nogil:
        for c in range(c_in):
            for ki in range(k):
                _valid_range(ho, h, ki - pad, stride, &i_lo, &i_hi)
                for kj in range(k):
                    _valid_range(wo, w, kj - pad, stride, &j_lo, &j_hi)
                    row = (c * k + ki) * k + kj
                    for i in range(i_lo, i_hi):
                        src_i = i * stride + ki - pad
                        dst = &cols[row, i * wo]
                        src = &x[c, src_i, 0]
                        base = kj - pad
                        for j in range(j_lo, j_hi):
                            dst[j] = src[j * stride + base]
    return out


def col2im(const double[:, ::1] cols, int c_in, int h, int w, int k, int stride, int pad):
    """Adjoint of :func:`im2col`: scatter-add patch rows back into (C, H, W)."""
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((c_in, h, w), dtype=np.float64)
    cdef double[:, :, ::1] x = out
    cdef Py_ssize_t c, ki, kj, i, j, row, src_i, i_lo, i_hi, j_lo, j_hi, base
    cdef double* dst
    cdef const double* src
    with nogil:
        for c in range(c_in):
            for ki in range(k):
                _valid_range(ho, h, ki - pad, stride, &i_lo, &i_hi)
                for kj in range(k):
                    _valid_range(wo, w, kj - pad, stride, &j_lo, &j_hi)
                    row = (c * k + ki) * k + kj
                    for i in range(i_lo, i_hi):
                        src_i = i * stride + ki - pad
                        src = &cols[row, i * wo]
                        dst = &x[c, src_i, 0]
                        base = kj - pad
                        for j in range(j_lo, j_hi):
                            dst[j * stride + base] += src[j]
    return out


def fft_rows(a, bint inverse=False):
    """Unnormalized radix-2 DIT FFT along the last axis of a 2-D complex array.

    Returns a new array; the row length must be a power of two.
    """
    out = np.array(a, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] buf = out
    cdef Py_ssize_t rows = buf.shape[0], n = buf.shape[1]
    cdef Py_ssize_t r, i, j, bit, m, half, start, q
    cdef double sign = 1.0 if inverse else -1.0
    cdef double ang
    cdef double complex tmp, u, v
    tw_arr = np.empty(max(n // 2, 1), dtype=np.complex128)
    cdef double complex[::1] tw = tw_arr
    for q in range(n // 2):
        ang = sign * 2.0 * M_PI * q / n
        tw[q] = cos(ang) + 1j * sin(ang)
    with nogil:
        for r in range(rows):
            j = 0
            for i in range(1, n):
                bit = n >> 1
                while j & bit:
                    j ^= bit
                    bit >>= 1
                j ^= bit
                if i < j:
                    tmp = buf[r, i]
                    buf[r, i] = buf[r, j]
                    buf[r, j] = tmp
            m = 2
            while m <= n:
                half = m >> 1
                start = 0
                while start < n:
                    for q in range(half):
                        u = buf[r, start + q]
                        v = buf[r, start + q + half] * tw[q * (n // m)]
                        buf[r, start + q] = u + v
                        buf[r, start + q + half] = u - v
                    start += m
                m <<= 1
    return out
