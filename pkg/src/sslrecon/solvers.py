"""Reconstruction regimes: self-supervised prior fitting, supervised training,
and a TV-regularized primal-dual baseline.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data_eval import psnr, ssim
from .fourier import fft2_centered, fft2c, ifft2_centered, real_to_planar, to_planar
from .forward_models import TASKS, SamplingMask, masked_fourier_tensor
from .prior_net import NetConfig, build_network, make_input, net_forward
from .tensor import NetParams, Tensor, adam_step, add, backward, l1_norm, mul

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """The training loss stopped being finite."""


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 8.0
    gamma: float = 1e-5

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")


PRESET_X4 = LossWeights(1.0, 8.0, 1e-5)
PRESET_X8 = LossWeights(0.0, 7.0, 0.0)


def task_preset(task):
    """(weights, input_mode) used for a named task."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if TASKS[task][1] >= 8:
        return PRESET_X8, "meshgrid"
    return PRESET_X4, "stacked"


@dataclass
class FitConfig:
    max_iters: int = 2000
    lr: float = 1e-4
    seed: int | None = None
    input_mode: str | None = None
    track_best: bool = True
    log_every: int = 100
    early_stop: bool = False
    batch_size: int = 8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class ReconReport:
    method: str
    iterations: int = 0
    final_loss: float | None = None
    losses: list = field(default_factory=list)
    wall_time: float = 0.0
    psnr: float | None = None
    ssim: float | None = None
    best_loss: float | None = None
    metrics: dict = field(default_factory=dict)

    def attach_metrics(self, x_true, x_hat):
        self.psnr = psnr(x_true, x_hat)
        self.ssim = ssim(x_true, x_hat)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "loss", "psnr", "ssim"])
            for i, loss in enumerate(self.losses):
                p, s = self.metrics.get(i, ("", ""))
                writer.writerow([i, repr(float(loss)), _fmt(p), _fmt(s)])

    def summary(self):
        """Plain-text summary; wall time is left out so files stay reproducible."""
        lines = [f"method: {self.method}", f"iterations: {self.iterations}"]
        if self.final_loss is not None:
            lines.append(f"final_loss: {self.final_loss!r}")
        if self.best_loss is not None:
            lines.append(f"best_loss: {self.best_loss!r}")
        if self.psnr is not None:
            lines.append(f"psnr_db: {self.psnr:.4f}")
            lines.append(f"ssim: {self.ssim:.4f}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    return "" if v == "" or v is None else f"{v:.6f}"


# -- self-supervised -------------------------------------------------------


def _planar(y):
    return y if isinstance(y, Tensor) else Tensor(to_planar(y))


def ssl_loss_terms(y, x_hat, mask, weights, net=None, input_mode=None):
    """The three weighted-loss terms before weighting; zero-weight terms are skipped.

    ``x_hat`` is the (1, H, W) network output; ``y`` the complex measurement.
    """
    if weights.gamma > 0:
        if net is None or input_mode is None:
            raise ValueError("the cycle term needs the network and its input mode")
        if input_mode == "meshgrid":
            raise ValueError("cycle consistency is undefined for meshgrid-only input; use gamma = 0")
    y_t = _planar(y)
    if y_t.shape[1:] != x_hat.shape[1:] or y_t.shape[1:] != tuple(mask.shape):
        raise ValueError(f"shape mismatch: y {y_t.shape}, x_hat {x_hat.shape}, mask {mask.shape}")
    x_c = real_to_planar(x_hat)
    terms = {}
    y_hat = None
    if weights.alpha > 0 or weights.gamma > 0:
        y_hat = masked_fourier_tensor(x_c, mask)
    if weights.alpha > 0:
        terms["image"] = l1_norm(y_t, y_hat)
    if weights.beta > 0:
        k_meas = Tensor(to_planar(fft2_centered(y_t.data[0] + 1j * y_t.data[1])))
        k_hat = mul(fft2c(x_c), np.broadcast_to(mask.array, x_c.shape))
        terms["kspace"] = l1_norm(k_meas, k_hat)
    if weights.gamma > 0:
        x_cycle = net_forward(net, make_input(input_mode, y_hat))
        terms["cycle"] = l1_norm(x_hat, x_cycle)
    return terms


def ssl_loss(y, x_hat, mask, weights, net=None, input_mode=None):
    """alpha*|y - F(x)|_1 + beta*|Phi y - S Phi x|_1 + gamma*|I(y) - I(F(x))|_1."""
    terms = ssl_loss_terms(y, x_hat, mask, weights, net, input_mode)
    scale = {"image": weights.alpha, "kspace": weights.beta, "cycle": weights.gamma}
    total = Tensor(0.0)
    for name, term in terms.items():
        total = add(total, mul(term, scale[name]))
    return total


def _plateaued(losses, window=100, tol=1e-6):
    if len(losses) <= window:
        return False
    old = losses[-window - 1]
    return abs(losses[-1] - old) <= tol * abs(old)


def ssl_fit(y, mask, net_cfg=None, weights=PRESET_X4, fit_cfg=None, ground_truth=None, params=None):
    """Fit the prior network to a single measurement; returns (x_hat, report)."""
    net_cfg = net_cfg or NetConfig()
    fit_cfg = fit_cfg or FitConfig()
    overrides = {}
    if fit_cfg.seed is not None:
        overrides["seed"] = fit_cfg.seed
    if fit_cfg.input_mode is not None:
        overrides["input_mode"] = fit_cfg.input_mode
    net_cfg = replace(net_cfg, **overrides)
    mode = net_cfg.input_mode
    if weights.gamma > 0 and mode == "meshgrid":
        raise ValueError("cycle consistency is undefined for meshgrid-only input; use gamma = 0")
    y = np.asarray(y, dtype=np.complex128)
    params = params or build_network(net_cfg)
    inp = make_input(mode, y, y.shape)
    y_t = _planar(y)

    report = ReconReport(method="ssl")
    start = time.perf_counter()
    best, best_img, x_hat = np.inf, None, None
    for it in range(fit_cfg.max_iters):
        x_hat = net_forward(params, inp)
        loss = ssl_loss(y_t, x_hat, mask, weights, params, mode)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"ssl_fit: loss became {value} at iteration {it}")
        report.losses.append(value)
        if value < best:
            best, best_img = value, x_hat.data[0].copy()
        if ground_truth is not None and fit_cfg.log_every and it % fit_cfg.log_every == 0:
            report.metrics[it] = (psnr(ground_truth, x_hat.data[0]), ssim(ground_truth, x_hat.data[0]))
        if fit_cfg.log_every and it % fit_cfg.log_every == 0:
            logger.info("ssl iter %d loss %.6g", it, value)
        backward(loss)
        adam_step(params, lr=fit_cfg.lr)
        if fit_cfg.early_stop and _plateaued(report.losses):
            break

    out = best_img if fit_cfg.track_best else x_hat.data[0].copy()
    report.iterations = len(report.losses)
    report.final_loss = report.losses[-1]
    report.best_loss = best
    report.wall_time = time.perf_counter() - start
    if ground_truth is not None:
        report.attach_metrics(ground_truth, out)
    return out, report


# -- supervised ------------------------------------------------------------


def _supervised_inputs(pairs, mode):
    return [(make_input(mode, y, np.shape(x)), Tensor(np.asarray(x, dtype=np.float64)[None])) for x, y in pairs]


def supervised_loss(params, batch):
    """Mean over pairs of the summed absolute error; ``batch`` is [(input, target)]."""
    total = Tensor(0.0)
    for inp, target in batch:
        total = add(total, l1_norm(net_forward(params, inp), target))
    return mul(total, 1.0 / len(batch))


def supervised_train(pairs, net_cfg=None, fit_cfg=None):
    """Minimize mean L1(I(y_i), x_i) with minibatch Adam; returns (params, report)."""
    if not pairs:
        raise ValueError("supervised_train needs at least one (x, y) pair")
    shapes = {np.shape(x) for x, _ in pairs} | {np.shape(y) for _, y in pairs}
    if len(shapes) != 1:
        raise ValueError(f"all images must share one shape, got {sorted(shapes)}")
    net_cfg = net_cfg or NetConfig()
    fit_cfg = fit_cfg or FitConfig()
    overrides = {}
    if fit_cfg.seed is not None:
        overrides["seed"] = fit_cfg.seed
    if fit_cfg.input_mode is not None:
        overrides["input_mode"] = fit_cfg.input_mode
    net_cfg = replace(net_cfg, **overrides)
    if net_cfg.input_mode == "meshgrid":
        raise ValueError("supervised training needs a measurement-dependent input mode")

    params = build_network(net_cfg)
    data = _supervised_inputs(pairs, net_cfg.input_mode)
    rng = np.random.default_rng(net_cfg.seed)
    batch_size = min(fit_cfg.batch_size, len(data))
    order = rng.permutation(len(data))
    cursor = 0
    report = ReconReport(method="supervised")
    start = time.perf_counter()
    for it in range(fit_cfg.max_iters):
        if cursor + batch_size > len(data):
            order = rng.permutation(len(data))
            cursor = 0
        batch = [data[i] for i in order[cursor : cursor + batch_size]]
        cursor += batch_size
        loss = supervised_loss(params, batch)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"supervised_train: loss became {value} at iteration {it}")
        report.losses.append(value)
        if fit_cfg.log_every and it % fit_cfg.log_every == 0:
            logger.info("supervised iter %d loss %.6g", it, value)
        backward(loss)
        adam_step(params, lr=fit_cfg.lr)
    report.iterations = len(report.losses)
    report.final_loss = report.losses[-1]
    report.best_loss = min(report.losses)
    report.wall_time = time.perf_counter() - start
    return params, report


def apply_network(params: NetParams, y, mode=None):
    mode = mode or params.config.input_mode
    y = np.asarray(y, dtype=np.complex128)
    return net_forward(params, make_input(mode, y, y.shape)).data[0].copy()


# -- total variation -------------------------------------------------------


def grad2d(x):
    """Forward differences with Neumann boundary (last row/column difference 0)."""
    g = np.zeros((2,) + x.shape)
    g[0, :-1] = x[1:] - x[:-1]
    g[1, :, :-1] = x[:, 1:] - x[:, :-1]
    return g


def div2d(p):
    """Negative adjoint of :func:`grad2d`."""
    d = np.zeros(p.shape[1:])
    d[:-1] += p[0, :-1]
    d[1:] -= p[0, :-1]
    d[:, :-1] += p[1, :, :-1]
    d[:, 1:] -= p[1, :, :-1]
    return d


def total_variation(x):
    g = grad2d(x)
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


def _mirror(arr):
    # centered-grid index r pairs with (H - r) mod H
    h, w = arr.shape
    return arr[(-np.arange(h)) % h][:, (-np.arange(w)) % w]


def tv_objective(x, y, mask, tv_weight):
    r = ifft2_centered(mask.array * fft2_centered(x)) - y
    return 0.5 * float(np.sum(np.abs(r) ** 2)) + tv_weight * total_variation(x)


def tv_reconstruct(y, mask: SamplingMask, tv_weight=0.01, iters=200, ground_truth=None):
    """Primal-dual solver for 0.5*|F x - y|^2 + tv_weight * TV(x) over real images.

    The data term is handled through its exact proximal map, which is diagonal in
    k-space because the normal operator of a real-input masked Fourier model is
    Phi^-1 diag((S + S_mirror)/2) Phi.
    """
    if tv_weight < 0:
        raise ValueError("tv_weight must be >= 0")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != tuple(mask.shape):
        raise ValueError(f"measurement {y.shape} vs mask {mask.shape}")
    normal = 0.5 * (mask.array + _mirror(mask.array))
    aty = ifft2_centered(mask.array * fft2_centered(y)).real
    tau = sigma = 0.99 / np.sqrt(8.0)

    def prox_data(v):
        k = fft2_centered(v + tau * aty) / (1.0 + tau * normal)
        return ifft2_centered(k).real

    x = aty.copy()
    x_bar = x.copy()
    p = np.zeros((2,) + y.shape)
    report = ReconReport(method="tv")
    start = time.perf_counter()
    for _ in range(iters):
        p += sigma * grad2d(x_bar)
        norm = np.maximum(1.0, np.sqrt(p[0] ** 2 + p[1] ** 2) / tv_weight) if tv_weight > 0 else None
        p = p / norm if norm is not None else np.zeros_like(p)
        x_new = prox_data(x + tau * div2d(p))
        x_bar = 2.0 * x_new - x
        x = x_new
        report.losses.append(tv_objective(x, y, mask, tv_weight))
    report.iterations = iters
    report.final_loss = report.losses[-1]
    report.best_loss = min(report.losses)
    report.wall_time = time.perf_counter() - start
    if ground_truth is not None:
        report.attach_metrics(ground_truth, x)
    return x, report


# -- dispatch --------------------------------------------------------------

METHODS = ("ssl", "tv", "supervised-apply")


def reconstruct(method, y, mask, *, task=None, weights=None, net_cfg=None, fit_cfg=None,
                tv_weight=0.01, tv_iters=200, params=None, ground_truth=None):
    """Run one of ``ssl``, ``tv`` or ``supervised-apply`` on a measurement."""
    if method == "tv":
        return tv_reconstruct(y, mask, tv_weight, tv_iters, ground_truth)
    if method == "ssl":
        net_cfg = net_cfg or NetConfig()
        if task is not None:
            preset, mode = task_preset(task)
            if weights is None:
                weights = preset
                net_cfg = replace(net_cfg, input_mode=mode)
        return ssl_fit(y, mask, net_cfg, weights or PRESET_X4, fit_cfg, ground_truth)
    if method == "supervised-apply":
        if params is None:
            raise ValueError("supervised-apply needs trained parameters")
        start = time.perf_counter()
        x_hat = apply_network(params, y)
        report = ReconReport(method="supervised", wall_time=time.perf_counter() - start)
        if ground_truth is not None:
            report.attach_metrics(ground_truth, x_hat)
        return x_hat, report
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
