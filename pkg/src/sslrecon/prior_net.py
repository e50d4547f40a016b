"""U-Net-style encoder-decoder used as the inverse operator, and its inputs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .fourier import to_planar
from .tensor import (
    NetParams,
    ShapeError,
    Tensor,
    concat,
    conv2d,
    instance_norm,
    leaky_relu,
    upsample_nearest,
)

INPUT_CHANNELS = {"measurement": 2, "meshgrid": 2, "stacked": 4}


@dataclass
class NetConfig:
    scales: int = 3
    base_channels: int = 16
    kernel_size: int = 3
    leaky_slope: float = 0.1
    input_mode: str = "measurement"
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.scales < 1 or self.base_channels < 1:
            raise ValueError("scales and base_channels must be >= 1")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.input_mode not in INPUT_CHANNELS:
            raise ValueError(f"unknown input_mode {self.input_mode!r}")


def _layout(cfg, in_channels):
    """(name, out_ch, in_ch, kernel) for every convolution, in creation order."""
    b, k = cfg.base_channels, cfg.kernel_size
    layers = [("enc0.a", b, in_channels, k), ("enc0.b", b, b, k)]
    for s in range(1, cfg.scales + 1):
        layers += [(f"down{s}", b, b, k), (f"enc{s}", b, b, k)]
    for s in range(cfg.scales, 0, -1):
        layers += [(f"dec{s - 1}.a", b, 2 * b, k), (f"dec{s - 1}.b", b, b, k)]
    layers.append(("head", 1, b, 1))
    return layers


def build_network(cfg: NetConfig, in_channels=None) -> NetParams:
    """Create He-initialized weights (variance 2/fan_in) and zero biases."""
    if in_channels is None:
        in_channels = INPUT_CHANNELS[cfg.input_mode]
    rng = np.random.default_rng(cfg.seed)
    tensors = {}
    for name, c_out, c_in, k in _layout(cfg, in_channels):
        fan_in = c_in * k * k
        tensors[f"{name}.weight"] = Tensor(rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in))
        tensors[f"{name}.bias"] = Tensor(np.zeros(c_out))
    params = NetParams(tensors, config=cfg)
    params.in_channels = in_channels
    return params


def _conv(params, name, x, stride=1, act=True):
    cfg = params.config
    w = params[f"{name}.weight"]
    pad = w.shape[-1] // 2
    out = conv2d(x, w, params[f"{name}.bias"], stride=stride, padding=pad)
    if not act:
        return out
    if cfg.normalize:
        out = instance_norm(out)
    return leaky_relu(out, cfg.leaky_slope)


def net_forward(params: NetParams, inp: Tensor) -> Tensor:
    """Map a (C, H, W) input to a (1, H, W) image estimate."""
    cfg = params.config
    expected = params["enc0.a.weight"].shape[1]
    if inp.data.ndim != 3 or inp.shape[0] != expected:
        raise ShapeError(f"network expects ({expected}, H, W) input, got {inp.shape}")
    h, w = inp.shape[1:]
    step = 2**cfg.scales
    if h % step or w % step:
        raise ShapeError(f"spatial size {(h, w)} must be divisible by {step}")

    x = _conv(params, "enc0.a", inp)
    skips = [_conv(params, "enc0.b", x)]
    for s in range(1, cfg.scales + 1):
        x = _conv(params, f"down{s}", skips[-1], stride=2)
        skips.append(_conv(params, f"enc{s}", x))
    x = skips.pop()
    for s in range(cfg.scales, 0, -1):
        x = concat([upsample_nearest(x, 2), skips.pop()])
        x = _conv(params, f"dec{s - 1}.a", x)
        x = _conv(params, f"dec{s - 1}.b", x)
    return _conv(params, "head", x, act=False)


def meshgrid(shape):
    """Two channels of row and column coordinates, each spanning [0, 1]."""
    h, w = shape
    rows = np.linspace(0.0, 1.0, h)
    cols = np.linspace(0.0, 1.0, w)
    return np.stack([np.repeat(rows[:, None], w, axis=1), np.repeat(cols[None, :], h, axis=0)])


def make_input(mode, y=None, shape=None):
    """Network input for one of the modes ``measurement``, ``meshgrid``, ``stacked``.

    ``y`` is a complex (H, W) array or a planar (2, H, W) tensor; with a tensor the
    result stays connected to the graph (used by the cycle-consistency term).
    """
    if mode not in INPUT_CHANNELS:
        raise ValueError(f"unknown input mode {mode!r}")
    if mode != "meshgrid" and y is None:
        raise ValueError(f"input mode {mode!r} needs a measurement")
    if y is not None and not isinstance(y, Tensor):
        y = Tensor(to_planar(y))
    if shape is None:
        if y is None:
            raise ValueError("meshgrid input needs a shape")
        shape = y.shape[1:]
    if mode == "measurement":
        return y
    grid = Tensor(meshgrid(shape))
    if mode == "meshgrid":
        return grid
    return concat([y, grid])


# -- checkpoints ------------------------------------------------------------

_MAGIC = "SSLRECON-CHECKPOINT 1"


def save_checkpoint(path, params: NetParams):
    """Text header (config, names, shapes), then float64 little-endian data."""
    cfg = asdict(params.config)
    lines = [_MAGIC, "config " + " ".join(f"{k}={v}" for k, v in cfg.items()), f"in_channels {params.in_channels}"]
    for name, t in params:
        lines.append(f"tensor {name} " + " ".join(str(d) for d in t.shape))
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    header_end = blob.index(b"\nend\n") + len(b"\nend\n")
    lines = blob[:header_end].decode("ascii").splitlines()
    if lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    fields = dict(item.split("=", 1) for item in lines[1].split()[1:])
    types = {"scales": int, "base_channels": int, "kernel_size": int, "leaky_slope": float, "seed": int}
    kwargs = {k: types[k](v) if k in types else v for k, v in fields.items()}
    kwargs["normalize"] = kwargs.get("normalize") == "True"
    cfg = NetConfig(**kwargs)
    in_channels = int(lines[2].split()[1])
    params = build_network(cfg, in_channels)
    offset = header_end
    arrays = {}
    for line in lines[3:-1]:
        _, name, *dims = line.split()
        shape = tuple(int(d) for d in dims)
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes")
    params.load(arrays)
    return params

