"""Synthetic phantoms, measurement datasets, PSNR/SSIM, and image file I/O."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .forward_models import MeasurementSimConfig, simulate_measurement
from .tensor import ShapeError

PSNR_CAP = 100.0

# (center x, center y, semi-axis a, semi-axis b, angle in degrees, additive intensity)
_SHEPP_LOGAN = [
    (0.0, 0.0, 0.69, 0.92, 0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0, 0.1),
]


@dataclass
class EvalRecord:
    task: str
    method: str
    psnr: float
    ssim: float


def _ellipse_image(size, ellipses):
    coords = np.linspace(-1.0, 1.0, size)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    img = np.zeros((size, size))
    for x0, y0, a, b, theta, value, *ramp in ellipses:
        t = np.deg2rad(theta)
        u = (xx - x0) * np.cos(t) + (yy - y0) * np.sin(t)
        v = -(xx - x0) * np.sin(t) + (yy - y0) * np.cos(t)
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        # optional linear shading along the major axis, so regions are smooth rather than flat
        slope = ramp[0] if ramp else 0.0
        img[inside] += value * (1.0 + slope * u[inside] / a)
    return img


def make_phantom(size, kind="ellipses", seed=0):
    """Piecewise-smooth test image in [0, 1] with sharp edges.

    ``ellipses`` draws a bright outer ellipse plus 4 to 11 random inner ones with
    random additive intensities, each shaded by a linear ramp; ``shepp_logan_like`` uses the modified
    Shepp-Logan table (``seed`` is ignored).
    """
    if size < 32 or size & (size - 1):
        raise ValueError(f"phantom size must be a power of two >= 32, got {size}")
    if kind == "shepp_logan_like":
        return np.clip(_ellipse_image(size, _SHEPP_LOGAN), 0.0, 1.0)
    if kind != "ellipses":
        raise ValueError(f"unknown phantom kind {kind!r}")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 13))
    outer = (
        rng.uniform(-0.05, 0.05),
        rng.uniform(-0.05, 0.05),
        rng.uniform(0.6, 0.85),
        rng.uniform(0.7, 0.9),
        rng.uniform(-30, 30),
        rng.uniform(0.4, 0.7),
        rng.uniform(-0.4, 0.4),
    )
    ellipses = [outer]
    for _ in range(n - 1):
        ellipses.append(
            (
                rng.uniform(-0.45, 0.45),
                rng.uniform(-0.45, 0.45),
                rng.uniform(0.05, 0.35),
                rng.uniform(0.05, 0.35),
                rng.uniform(0, 180),
                rng.uniform(-0.35, 0.45),
                rng.uniform(-0.5, 0.5),
            )
        )
    return np.clip(_ellipse_image(size, ellipses), 0.0, 1.0)


def psnr(ref, test, data_range=None):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"psnr: shape mismatch {ref.shape} vs {test.shape}")
    if data_range is None:
        data_range = float(ref.max())
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(data_range**2 / mse))


def gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(ref, test, data_range=None, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over all fully-contained Gaussian-weighted windows."""
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"ssim: shape mismatch {ref.shape} vs {test.shape}")
    if min(ref.shape) < win_size:
        raise ShapeError(f"ssim: image {ref.shape} smaller than the {win_size}x{win_size} window")
    if data_range is None:
        data_range = float(ref.max())
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    win = gaussian_window(win_size, sigma)

    def filt(a):
        return convolve2d(a, win, mode="valid")

    mu_x, mu_y = filt(ref), filt(test)
    sxx = filt(ref * ref) - mu_x**2
    syy = filt(test * test) - mu_y**2
    sxy = filt(ref * test) - mu_x * mu_y
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.clip(np.mean(num / den), -1.0, 1.0))


def build_dataset(n, size, mask, seed=0, kind="ellipses", noise_std=0.0):
    """n aligned (x, y) pairs; item i uses phantom and noise seeds derived from ``seed``."""
    if n < 1:
        raise ValueError("dataset needs n >= 1")
    seeds = np.random.SeedSequence(seed).generate_state(2 * n)
    pairs = []
    for i in range(n):
        x = make_phantom(size, kind, int(seeds[2 * i]))
        y = simulate_measurement(x, mask, MeasurementSimConfig(noise_std, int(seeds[2 * i + 1])))
        pairs.append((x, y))
    return pairs


# -- file formats ------------------------------------------------------------


def write_pgm(path, img, vmax=1.0):
    """16-bit binary PGM; values are clipped to [0, vmax] and scaled to 0..65535."""
    img = np.asarray(img, dtype=np.float64)
    q = np.round(np.clip(img / vmax, 0.0, 1.0) * 65535).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path):
    """Read binary (P5) or plain (P2) PGM, returning values scaled to [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end : end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end].decode("ascii"))
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(blob, dtype=dtype, count=w * h, offset=pos + 1)
    elif magic == "P2":
        data = np.array(blob[pos:].split(), dtype=np.float64)[: w * h]
    else:
        raise ValueError(f"{path}: unsupported image format {magic!r}")
    return data.reshape(h, w).astype(np.float64) / maxval


def write_raw(path, arr):
    """float64 little-endian planes after a one-line header ``H W`` (or ``H W C``)."""
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        arr = np.stack([arr.real, arr.imag])
    if arr.ndim == 2:
        header = f"{arr.shape[0]} {arr.shape[1]}"
    else:
        header = f"{arr.shape[1]} {arr.shape[2]} {arr.shape[0]}"
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_raw(path, complex_planes=True):
    """Inverse of :func:`write_raw`; two planes come back as a complex array."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        data = np.frombuffer(fh.read(), dtype="<f8")
    dims = [int(v) for v in header]
    if len(dims) == 2:
        return data.reshape(dims).copy()
    h, w, c = dims
    planes = data.reshape(c, h, w)
    if complex_planes and c == 2:
        return planes[0] + 1j * planes[1]
    return planes.copy()


def read_image(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".pgm", ".pnm"):
        return read_pgm(path)
    img = read_raw(path)
    return img.real if np.iscomplexobj(img) else img


def append_csv(path, header, rows):
    """Append rows, writing the header first when the file is new or empty."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(header)
        writer.writerows(rows)
