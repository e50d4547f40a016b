"""Small reverse-mode differentiation engine over dense float64 arrays.

Tensors are usually (channels, height, width); losses are 0-d. Only the
operations needed by the prior network, the Fourier forward model and the
L1 losses are provided.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class Tensor:
    """A float64 array that remembers how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def item(self):
        return float(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _check_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def backward(loss):
    """Populate ``.grad`` of every tensor reachable from the scalar ``loss``."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward needs a scalar root, got shape {loss.shape}")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- elementwise -----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "add")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "sub")

    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    """Elementwise product; ``b`` may be a python scalar or a constant array."""
    a = as_tensor(a)
    if isinstance(b, Tensor):
        _check_same_shape(a, b, "mul")

        def bw(g):
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

        return _make(a.data * b.data, (a, b), bw)
    const = np.asarray(b, dtype=np.float64)
    out = a.data * const
    if out.shape != a.shape:
        raise ShapeError(f"mul: constant of shape {const.shape} does not broadcast onto {a.shape}")

    def bw_const(g):
        _accumulate(a, g * const)

    return _make(out, (a,), bw_const)


def leaky_relu(x, slope):
    if not 0.0 <= slope <= 1.0:
        raise ValueError(f"leaky_relu slope must lie in [0, 1], got {slope}")
    pos = x.data > 0
    factor = np.where(pos, 1.0, slope)

    def bw(g):
        _accumulate(x, g * factor)

    return _make(x.data * factor, (x,), bw)


def tensor_sum(x):
    def bw(g):
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(x.data.sum()), (x,), bw)


def l1_norm(a, b):
    """Sum of absolute differences; the subgradient at exact ties is 0."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape(a, b, "l1_norm")
    diff = a.data - b.data
    sgn = np.sign(diff)

    def bw(g):
        _accumulate(a, g * sgn)
        _accumulate(b, -g * sgn)

    return _make(np.asarray(np.abs(diff).sum()), (a, b), bw)


# -- structural ------------------------------------------------------------


def concat(tensors):
    """Stack along the channel axis."""
    tensors = [as_tensor(t) for t in tensors]
    spatial = {t.shape[1:] for t in tensors}
    if len(spatial) != 1:
        raise ShapeError(f"concat: spatial shapes differ {sorted(spatial)}")
    sizes = [t.shape[0] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _accumulate(t, g[lo:hi])

    return _make(np.concatenate([t.data for t in tensors], axis=0), tensors, bw)


def channels(x, start, stop):
    """Channel slice ``x[start:stop]``."""

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[start:stop] = g
            _accumulate(x, full)

    return _make(x.data[start:stop].copy(), (x,), bw)


def upsample_nearest(x, factor):
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if factor == 1:
        return x
    out = x.data.repeat(factor, axis=1).repeat(factor, axis=2)
    c, h, w = x.shape

    def bw(g):
        _accumulate(x, g.reshape(c, h, factor, w, factor).sum(axis=(2, 4)))

    return _make(out, (x,), bw)


def downsample_stride(x, factor):
    """Keep every ``factor``-th row and column, starting at the first."""
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    c, h, w = x.shape
    if h % factor or w % factor:
        raise ShapeError(f"downsample: spatial dims {(h, w)} not divisible by {factor}")
    if factor == 1:
        return x

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, ::factor, ::factor] = g
            _accumulate(x, full)

    return _make(x.data[:, ::factor, ::factor].copy(), (x,), bw)


# -- layers ----------------------------------------------------------------


def conv2d(x, kernel, bias=None, stride=1, padding=0):
    """2-D cross-correlation of a (C, H, W) input with a (O, C, k, k) kernel."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects (C,H,W) input and (O,C,k,k) kernel, got {x.shape}, {kernel.shape}")
    c_out, c_in, k, k2 = kernel.shape
    if k != k2:
        raise ShapeError(f"conv2d: non-square kernel {kernel.shape}")
    if c_in != x.shape[0]:
        raise ShapeError(f"conv2d: kernel expects {c_in} input channels, input has {x.shape[0]}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d needs stride >= 1 and padding >= 0")
    _, h, w = x.shape
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {(h, w)}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({c_out},)")

    cols = kernels.im2col(np.ascontiguousarray(x.data), k, stride, padding)
    wmat = kernel.data.reshape(c_out, -1)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(c_out, ho, wo)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g2 = g.reshape(c_out, -1)
        if kernel.requires_grad:
            _accumulate(kernel, (g2 @ cols.T).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g2.sum(axis=1))
        if x.requires_grad:
            dcols = np.ascontiguousarray(wmat.T @ g2)
            _accumulate(x, kernels.col2im(dcols, c_in, h, w, k, stride, padding))

    return _make(out, parents, bw)


def instance_norm(x, eps=1e-5):
    """Normalize each channel to zero mean and unit variance over space."""
    mean = x.data.mean(axis=(1, 2), keepdims=True)
    centered = x.data - mean
    var = (centered**2).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv

    def bw(g):
        gm = g.mean(axis=(1, 2), keepdims=True)
        gx = (g * xhat).mean(axis=(1, 2), keepdims=True)
        _accumulate(x, inv * (g - gm - xhat * gx))

    return _make(xhat, (x,), bw)


# -- parameters and optimizer ----------------------------------------------


class NetParams:
    """Ordered named parameters plus Adam moment estimates and step counter."""

    def __init__(self, tensors, config=None):
        self.tensors = dict(tensors)
        for name, t in self.tensors.items():
            t.requires_grad = True
            t.name = name
        self.m = {n: np.zeros_like(t.data) for n, t in self.tensors.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in self.tensors.items()}
        self.t = 0
        self.config = config

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def __len__(self):
        return len(self.tensors)

    def count(self):
        return sum(t.data.size for t in self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def snapshot(self):
        return {n: t.data.copy() for n, t in self.tensors.items()}

    def load(self, arrays):
        for n, arr in arrays.items():
            if arr.shape != self.tensors[n].shape:
                raise ShapeError(f"parameter {n}: shape {arr.shape} != {self.tensors[n].shape}")
            self.tensors[n].data = np.array(arr, dtype=np.float64)


def adam_step(params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update in place; gradients are cleared afterwards."""
    missing = [n for n, t in params if t.grad is None]
    if missing:
        raise ValueError(f"adam_step: no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    params.t += 1
    c1 = 1.0 - beta1**params.t
    c2 = 1.0 - beta2**params.t
    for name, p in params:
        g = p.grad
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None
    return params
