import numpy as np
import pytest

from _helpers import check_grads, leaf
from sslrecon import _pykernels, kernels
from sslrecon.fourier import (
    fft2_centered,
    fft2c,
    fftshift,
    ifft2_centered,
    ifft2c,
    ifftshift,
    to_planar,
)
from sslrecon.tensor import ShapeError, l1_norm


def naive_centered_dft(img):
    """O(N^4) direct summation with centered indices and 1/sqrt(HW) scaling."""
    h, w = img.shape
    out = np.zeros((h, w), dtype=complex)
    rows = np.arange(h) - h // 2
    cols = np.arange(w) - w // 2
    for ku in range(h):
        for kv in range(w):
            acc = 0j
            for r in range(h):
                for c in range(w):
                    phase = -2j * np.pi * (rows[ku] * rows[r] / h + cols[kv] * cols[c] / w)
                    acc += img[r, c] * np.exp(phase)
            out[ku, kv] = acc / np.sqrt(h * w)
    return out


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_matches_naive_dft(rng):
    z = random_complex(rng, (8, 8))
    assert np.max(np.abs(fft2_centered(z) - naive_centered_dft(z))) < 1e-10


def test_matches_naive_dft_rectangular(rng):
    z = random_complex(rng, (4, 8))
    assert np.max(np.abs(fft2_centered(z) - naive_centered_dft(z))) < 1e-10


def test_constant_image_single_dc(rng):
    n, c = 16, 0.37
    ks = fft2_centered(np.full((n, n), c))
    assert ks[n // 2, n // 2] == pytest.approx(c * n, abs=1e-12)
    ks[n // 2, n // 2] = 0
    assert np.max(np.abs(ks)) < 1e-12


def test_parseval(rng):
    z = random_complex(rng, (32, 16))
    assert abs(np.sum(np.abs(fft2_centered(z)) ** 2) - np.sum(np.abs(z) ** 2)) < 1e-12 * np.sum(np.abs(z) ** 2)


def test_round_trip(rng):
    z = random_complex(rng, (64, 64))
    assert np.max(np.abs(ifft2_centered(fft2_centered(z)) - z)) < 1e-10


def test_zero_and_dc_inverse():
    n = 8
    assert np.all(ifft2_centered(np.zeros((n, n))) == 0)
    ks = np.zeros((n, n), dtype=complex)
    ks[n // 2, n // 2] = n
    np.testing.assert_allclose(ifft2_centered(ks), np.ones((n, n)), atol=1e-12)


def test_linearity(rng):
    a, b = random_complex(rng, (2, 16, 16))
    lhs = fft2_centered(2.5 * a - 0.5j * b)
    rhs = 2.5 * fft2_centered(a) - 0.5j * fft2_centered(b)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    lhs = ifft2_centered(2.5 * a - 0.5j * b)
    assert np.max(np.abs(lhs - (2.5 * ifft2_centered(a) - 0.5j * ifft2_centered(b)))) < 1e-12


def test_hermitian_symmetry_of_real_input(rng):
    x = rng.standard_normal((16, 8))
    k = ifftshift(fft2_centered(x))
    h, w = k.shape
    mirrored = k[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    assert np.max(np.abs(k - np.conj(mirrored))) < 1e-12


@pytest.mark.parametrize("shape", [(6, 8), (8, 12), (3, 3)])
def test_non_power_of_two_rejected(shape):
    with pytest.raises(ShapeError, match="powers of two"):
        fft2_centered(np.zeros(shape))


def test_shift_conventions(rng):
    x = rng.standard_normal((4, 4))
    np.testing.assert_array_equal(fftshift(fftshift(x)), x)
    delta = np.zeros((4, 4))
    delta[0, 0] = 1
    assert fftshift(delta)[2, 2] == 1
    for shape in [(4, 8), (16, 2), (2, 2)]:
        y = rng.standard_normal(shape)
        np.testing.assert_array_equal(ifftshift(fftshift(y)), y)


def test_backends_agree(rng):
    a = random_complex(rng, (8, 32))
    np.testing.assert_allclose(kernels.fft_rows(a), _pykernels.fft_rows(a), atol=1e-12)
    np.testing.assert_allclose(kernels.fft_rows(a, True), _pykernels.fft_rows(a, True), atol=1e-12)


@pytest.mark.parametrize("transform", [fft2c, ifft2c])
def test_graph_gradient(rng, transform):
    x = leaf(to_planar(random_complex(rng, (8, 8))))
    target = to_planar(random_complex(rng, (8, 8)))
    check_grads(lambda: l1_norm(transform(x), target), [x])
