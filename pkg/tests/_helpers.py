"""Finite-difference gradient helpers shared by the test modules."""

import numpy as np

from sslrecon.tensor import Tensor, backward


def numeric_grad(f, arr, h=1e-5):
    """Central finite differences of the scalar function ``f`` w.r.t. ``arr`` (in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    # the floor absorbs finite-difference noise (~1e-9) on exactly-zero gradients
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-3))


def check_grads(build, leaves, tol=1e-4):
    """Compare backprop grads of ``build()`` against finite differences for each leaf."""
    for leaf in leaves:
        leaf.grad = None
    loss = build()
    backward(loss)
    worst = 0.0
    for leaf in leaves:
        num = numeric_grad(lambda: build().item(), leaf.data)
        worst = max(worst, rel_err(leaf.grad, num))
    assert worst < tol, f"gradient relative error {worst:.3e}"
    return worst


def leaf(arr):
    return Tensor(np.array(arr, dtype=np.float64), requires_grad=True)
