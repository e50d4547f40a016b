"""Pure-numpy versions of the hot kernels, used when the compiled module is absent."""

import numpy as np


def im2col(x, k, stride, pad):
    """Unfold (C, H, W) into a (C*k*k, Ho*Wo) patch matrix with zero padding."""
    c_in, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (C, Ho, Wo, k, k) -> (C, k, k, Ho, Wo)
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c_in * k * k, ho * wo)


def col2im(cols, c_in, h, w, k, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add patch rows back into (C, H, W)."""
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    cols = cols.reshape(c_in, k, k, ho, wo)
    out = np.zeros((c_in, h + 2 * pad, w + 2 * pad))
    for ki in range(k):
        for kj in range(k):
            out[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += cols[:, ki, kj]
    if pad:
        out = out[:, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_rows(a, inverse=False):
    """Unnormalized radix-2 DIT FFT along the last axis of a 2-D complex array."""
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    out = a[:, _bit_reverse(n)]
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        blocks = out.reshape(out.shape[0], n // m, m)
        u = blocks[:, :, :half].copy()
        v = blocks[:, :, half:] * tw
        blocks[:, :, :half] = u + v
        blocks[:, :, half:] = u - v
        m *= 2
    return out
