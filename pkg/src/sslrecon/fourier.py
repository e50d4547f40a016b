"""Centered orthonormal 2-D DFT built on the radix-2 row kernel.

k-space arrays are stored centered: the DC coefficient sits at (H//2, W//2).
The graph versions act on planar (2, H, W) tensors holding (real, imag).
"""

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _accumulate, _make


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def _check_pow2(shape):
    if len(shape) != 2:
        raise ShapeError(f"expected a 2-D array, got shape {shape}")
    if not all(_is_pow2(n) for n in shape):
        raise ShapeError(f"dimensions must be powers of two, got {shape}")


def fftshift(a):
    """Move the zero-frequency bin to the center (quadrant swap on even sizes)."""
    a = np.asarray(a)
    return np.roll(a, (a.shape[-2] // 2, a.shape[-1] // 2), axis=(-2, -1))


def ifftshift(a):
    a = np.asarray(a)
    return np.roll(a, (-(a.shape[-2] // 2), -(a.shape[-1] // 2)), axis=(-2, -1))


def _dft2(a, inverse):
    a = np.asarray(a, dtype=np.complex128)
    _check_pow2(a.shape)
    out = kernels.fft_rows(a, inverse)
    out = kernels.fft_rows(np.ascontiguousarray(out.T), inverse).T
    return np.ascontiguousarray(out) / np.sqrt(a.size)


def fft2_centered(img):
    """Orthonormal 2-D DFT with centered input and output."""
    return fftshift(_dft2(ifftshift(img), inverse=False))


def ifft2_centered(ks):
    return fftshift(_dft2(ifftshift(ks), inverse=True))


def to_planar(z):
    z = np.asarray(z)
    return np.stack([z.real, z.imag]).astype(np.float64)


def from_planar(p):
    p = np.asarray(p)
    return p[0] + 1j * p[1]


def _planar_transform(x, forward):
    if x.data.ndim != 3 or x.shape[0] != 2:
        raise ShapeError(f"planar complex tensor must have shape (2, H, W), got {x.shape}")
    fwd, adj = (fft2_centered, ifft2_centered) if forward else (ifft2_centered, fft2_centered)
    out = to_planar(fwd(from_planar(x.data)))

    # unitary transform: the adjoint is the inverse
    def bw(g):
        _accumulate(x, to_planar(adj(from_planar(g))))

    return _make(out, (x,), bw)


def fft2c(x: Tensor) -> Tensor:
    """Graph node for :func:`fft2_centered` on a planar tensor."""
    return _planar_transform(x, forward=True)


def ifft2c(x: Tensor) -> Tensor:
    return _planar_transform(x, forward=False)


def real_to_planar(x: Tensor) -> Tensor:
    """(1, H, W) real tensor -> (2, H, W) with zero imaginary plane."""
    if x.data.ndim != 3 or x.shape[0] != 1:
        raise ShapeError(f"expected a (1, H, W) tensor, got {x.shape}")
    out = np.concatenate([x.data, np.zeros_like(x.data)])

    def bw(g):
        _accumulate(x, g[:1])

    return _make(out, (x,), bw)
