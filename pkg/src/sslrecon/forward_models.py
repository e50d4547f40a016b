"""Forward operators: Cartesian k-space masks, the masked-Fourier model, and
simple linear operators (identity, inpainting, Gaussian compressed sensing).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import fft2_centered, fft2c, ifft2_centered, ifft2c
from .tensor import ShapeError, Tensor, mul

DEFAULT_CENTER_FRACTION = {4: 0.08, 8: 0.04}
TASKS = {
    "sr4": ("superresolution", 4),
    "dealias4": ("dealiasing", 4),
    "sr8": ("superresolution", 8),
    "dealias8": ("dealiasing", 8),
    "full": ("full", 1),
}


class UnsupportedOperatorError(ValueError):
    pass


@dataclass
class SamplingMask:
    """Binary column mask over centered k-space."""

    array: np.ndarray
    acceleration_factor: float
    geometry: str = "custom"

    def __post_init__(self):
        self.array = np.asarray(self.array, dtype=np.float64)
        if not np.isin(self.array, (0.0, 1.0)).all():
            raise ValueError("mask entries must be 0 or 1")

    @property
    def shape(self):
        return self.array.shape

    @property
    def sampled_fraction(self):
        return float(self.array[0].mean()) if self.array.size else 0.0

    def is_column_mask(self):
        return bool((self.array == self.array[:1]).all())


@dataclass
class MeasurementSimConfig:
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


def _columns_to_mask(shape, cols, af, geometry):
    h, w = shape
    line = np.zeros(w)
    line[cols] = 1.0
    return SamplingMask(np.tile(line, (h, 1)), af, geometry)


def make_sr_mask(shape, af):
    """Central low-frequency band of ``width // af`` columns."""
    h, w = shape
    if af not in (1, 2, 4, 8):
        raise ValueError(f"superresolution af must be one of 1, 2, 4, 8, got {af}")
    if w % af:
        raise ValueError(f"width {w} is not divisible by af {af}")
    n = w // af
    start = w // 2 - n // 2
    geometry = "full" if af == 1 else "superresolution"
    return _columns_to_mask(shape, np.arange(start, start + n), af, geometry)


def make_dealiasing_mask(shape, af, center_fraction=None):
    """Every ``af``-th column (phased through DC) plus a dense central band."""
    h, w = shape
    if af < 1:
        raise ValueError(f"af must be >= 1, got {af}")
    if center_fraction is None:
        center_fraction = DEFAULT_CENTER_FRACTION.get(af, 0.0)
    if not 0.0 <= center_fraction < 1.0:
        raise ValueError(f"center_fraction must lie in [0, 1), got {center_fraction}")
    dc = w // 2
    cols = set(range(dc % af, w, af))
    n_center = int(round(center_fraction * w))
    start = dc - n_center // 2
    cols.update(range(start, start + n_center))
    geometry = "full" if af == 1 else "dealiasing"
    return _columns_to_mask(shape, sorted(cols), af, geometry)


def full_mask(shape):
    return SamplingMask(np.ones(shape), 1, "full")


def make_task_mask(task, shape, center_fraction=None):
    """Mask for one of the named tasks: sr4, dealias4, sr8, dealias8, full."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}")
    geometry, af = TASKS[task]
    if geometry == "superresolution":
        return make_sr_mask(shape, af)
    if geometry == "dealiasing":
        return make_dealiasing_mask(shape, af, center_fraction)
    return full_mask(shape)


def _check_mask(x_shape, mask):
    if tuple(x_shape) != tuple(mask.shape):
        raise ShapeError(f"image shape {tuple(x_shape)} does not match mask shape {mask.shape}")


def apply_masked_fourier(x, mask):
    """Phi^-1(S * Phi x) for a real or complex image."""
    x = np.asarray(x)
    _check_mask(x.shape, mask)
    return ifft2_centered(mask.array * fft2_centered(x))


def masked_fourier_tensor(x: Tensor, mask: SamplingMask) -> Tensor:
    """Graph version on a planar (2, H, W) tensor."""
    _check_mask(x.shape[1:], mask)
    return ifft2c(mul(fft2c(x), np.broadcast_to(mask.array, x.shape)))


def simulate_measurement(x, mask, cfg=None):
    """y = F(x) + eta, with i.i.d. Gaussian noise on real and imaginary parts."""
    cfg = cfg or MeasurementSimConfig()
    y = apply_masked_fourier(x, mask)
    if cfg.noise_std > 0:
        rng = np.random.default_rng(cfg.seed)
        noise = rng.standard_normal((2,) + y.shape) * cfg.noise_std
        y = y + noise[0] + 1j * noise[1]
    return y


# -- generic linear operators ----------------------------------------------


@dataclass
class LinearOperatorSpec:
    """One of: identity, inpainting_mask, gaussian_random, masked_fourier, radon."""

    kind: str
    mask: np.ndarray | SamplingMask | None = None
    m: int | None = None
    n: int | None = None
    seed: int = 0
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "gaussian_random":
            if self.m is None or self.n is None:
                raise ValueError("gaussian_random needs m and n")
            if self.m > self.n:
                raise ValueError(f"gaussian_random needs m <= n, got m={self.m}, n={self.n}")

    def matrix(self):
        if self._matrix is None:
            rng = np.random.default_rng(self.seed)
            self._matrix = rng.standard_normal((self.m, self.n)) / np.sqrt(self.m)
        return self._matrix


def apply_linear(spec, x):
    x = np.asarray(x)
    if spec.kind == "identity":
        return x.copy()
    if spec.kind == "inpainting_mask":
        keep = np.asarray(spec.mask, dtype=bool)
        if keep.shape != x.shape:
            raise ShapeError(f"inpainting mask {keep.shape} vs input {x.shape}")
        return np.where(keep, x, 0)
    if spec.kind == "gaussian_random":
        if x.size != spec.n:
            raise ShapeError(f"operator expects {spec.n} entries, got {x.size}")
        return spec.matrix() @ x.ravel()
    if spec.kind == "masked_fourier":
        return apply_masked_fourier(x, spec.mask)
    raise UnsupportedOperatorError(f"unsupported operator: {spec.kind}")


def adjoint(spec, y, shape=None):
    """Apply the adjoint; ``shape`` restores the image shape for gaussian_random."""
    y = np.asarray(y)
    if spec.kind in ("identity", "inpainting_mask", "masked_fourier"):
        # all three are self-adjoint
        return apply_linear(spec, y)
    if spec.kind == "gaussian_random":
        if y.size != spec.m:
            raise ShapeError(f"adjoint expects {spec.m} entries, got {y.size}")
        out = spec.matrix().T @ y.ravel()
        return out.reshape(shape) if shape is not None else out
    raise UnsupportedOperatorError(f"unsupported operator: {spec.kind}")


# -- PBM (P1) mask files ---------------------------------------------------


def write_pbm(path, mask):
    arr = mask.array if isinstance(mask, SamplingMask) else np.asarray(mask)
    h, w = arr.shape
    lines = ["P1", f"# af={getattr(mask, 'acceleration_factor', 1)} geometry={getattr(mask, 'geometry', 'custom')}", f"{w} {h}"]
    lines += [" ".join("1" if v else "0" for v in row) for row in arr]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pbm(path):
    """Read a P1 bitmap written by :func:`write_pbm` (1 = sampled)."""
    af, geometry = 1.0, "custom"
    tokens = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    if key == "af":
                        af = float(val)
                    elif key == "geometry":
                        geometry = val
                continue
            tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError(f"{path}: not a P1 PBM file")
    w, h = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    if len(bits) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixels, found {len(bits)}")
    arr = np.array([int(b) for b in bits], dtype=np.float64).reshape(h, w)
    if af == int(af):
        af = int(af)
    return SamplingMask(arr, af, geometry)
