"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``CRITERION n PASS|FAIL`` line (visible without ``-s``) with
the measured numbers, then asserts at the stated tolerance. The SSL criteria
share one 64x64 ellipse phantom (seed 0) and run at the default learning rate.
"""

import time

import numpy as np
import pytest

from _helpers import check_grads, leaf, numeric_grad, rel_err
from sslrecon.cli import main
from sslrecon.data_eval import build_dataset, make_phantom, psnr, ssim
from sslrecon.fourier import fft2_centered, fft2c, ifft2_centered, ifft2c, to_planar
from sslrecon.forward_models import apply_masked_fourier, make_task_mask, masked_fourier_tensor
from sslrecon.prior_net import NetConfig, build_network, make_input, net_forward
from sslrecon.solvers import (
    PRESET_X4,
    PRESET_X8,
    FitConfig,
    apply_network,
    ssl_fit,
    ssl_loss,
    supervised_train,
    tv_reconstruct,
)
from sslrecon.tensor import (
    NetParams,
    Tensor,
    add,
    adam_step,
    backward,
    channels,
    concat,
    conv2d,
    downsample_stride,
    instance_norm,
    l1_norm,
    leaky_relu,
    mul,
    sub,
    tensor_sum,
    upsample_nearest,
)

SIZE = 64
PHANTOM_SEED = 0
SSL_ITERS_CYCLE = 5000
SSL_ITERS_X8 = 5000
SSL_BUDGET_S = 600


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n} {'PASS' if ok else 'FAIL'}: {detail}")

    return emit


def ssl_case(task, iters):
    x = make_phantom(SIZE, seed=PHANTOM_SEED)
    mask = make_task_mask(task, x.shape)
    y = apply_masked_fourier(x, mask)
    _, tv_rep = tv_reconstruct(y, mask, ground_truth=x)
    weights, mode = (PRESET_X8, "meshgrid") if task.endswith("8") else (PRESET_X4, "stacked")
    start = time.perf_counter()
    _, ssl_rep = ssl_fit(y, mask, NetConfig(input_mode=mode, seed=0), weights,
                         FitConfig(max_iters=iters, log_every=0), ground_truth=x)
    elapsed = time.perf_counter() - start
    return {"corrupted": psnr(x, np.abs(y)), "tv": tv_rep.psnr, "ssl": ssl_rep.psnr, "time": elapsed}


_CACHE = {}


@pytest.fixture(scope="module")
def sr4_run():
    if "sr4" not in _CACHE:
        _CACHE["sr4"] = ssl_case("sr4", SSL_ITERS_CYCLE)
    return _CACHE["sr4"]


def test_criterion_01_fft(report, rng):
    start = time.perf_counter()
    z = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    idx = np.arange(8) - 4
    phase = np.exp(-2j * np.pi * np.outer(idx, idx) / 8)
    # the centered DFT separates into rows and columns of the same phase matrix
    direct = np.einsum("ur,vc,rc->uv", phase, phase, z) / 8
    err_dft = np.max(np.abs(fft2_centered(z) - direct))
    w = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    err_rt = np.max(np.abs(ifft2_centered(fft2_centered(w)) - w))
    energy = np.sum(np.abs(w) ** 2)
    err_parseval = abs(np.sum(np.abs(fft2_centered(w)) ** 2) - energy) / energy
    elapsed = time.perf_counter() - start
    ok = err_dft < 1e-10 and err_rt < 1e-10 and err_parseval < 1e-12 and elapsed < 1
    report(1, ok, f"dft {err_dft:.1e}, round trip {err_rt:.1e}, parseval {err_parseval:.1e}, {elapsed:.3f}s")
    assert ok


def test_criterion_02_forward_model(report, rng):
    start = time.perf_counter()
    worst = 0.0
    for task in ["sr4", "sr8", "dealias4", "dealias8", "full"]:
        m = make_task_mask(task, (SIZE, SIZE))
        a, b = rng.standard_normal((2, SIZE, SIZE))
        fa, fb = apply_masked_fourier(a, m), apply_masked_fourier(b, m)
        worst = max(worst, np.max(np.abs(apply_masked_fourier(fa, m) - fa)))
        worst = max(worst, np.max(np.abs(apply_masked_fourier(2 * a - 3 * b, m) - (2 * fa - 3 * fb))))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 5
    report(2, ok, f"worst residual {worst:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_03_gradients(report, rng):
    start = time.perf_counter()
    errs = {}
    a, b = leaf(rng.standard_normal((2, 8, 8))), leaf(rng.standard_normal((2, 8, 8)))
    k, bias = leaf(0.3 * rng.standard_normal((3, 2, 3, 3))), leaf(rng.standard_normal(3))
    target = rng.standard_normal((2, 8, 8))
    t3 = rng.standard_normal((3, 8, 8))
    cases = {
        "add": (lambda: l1_norm(add(a, b), target), [a, b]),
        "sub": (lambda: l1_norm(sub(a, b), target), [a, b]),
        "mul": (lambda: l1_norm(mul(a, b), target), [a, b]),
        "leaky_relu": (lambda: l1_norm(leaky_relu(a, 0.1), target), [a]),
        "sum": (lambda: mul(tensor_sum(mul(a, a)), 0.5), [a]),
        "concat/channels": (lambda: l1_norm(channels(concat([a, b]), 1, 3), target), [a, b]),
        "upsample": (lambda: l1_norm(upsample_nearest(channels(a, 0, 2), 2), np.zeros((2, 16, 16)) + 0.1), [a]),
        "downsample": (lambda: l1_norm(downsample_stride(a, 2), target[:, ::2, ::2]), [a]),
        "conv2d": (lambda: l1_norm(conv2d(a, k, bias, padding=1), t3), [a, k, bias]),
        "conv2d stride 2": (lambda: l1_norm(conv2d(a, k, bias, stride=2, padding=1), t3[:, ::2, ::2]), [a, k]),
        "instance_norm": (lambda: l1_norm(mul(instance_norm(a), b), target), [a, b]),
        "fft2c": (lambda: l1_norm(fft2c(a), target), [a]),
        "ifft2c": (lambda: l1_norm(ifft2c(a), target), [a]),
        "masked_fourier": (lambda: l1_norm(masked_fourier_tensor(a, make_task_mask("sr4", (8, 8))), target), [a]),
    }
    for name, (build, leaves) in cases.items():
        errs[name] = check_grads(build, leaves, tol=np.inf)

    mask = make_task_mask("sr4", (8, 8))
    y = apply_masked_fourier(rng.random((8, 8)), mask)
    p = build_network(NetConfig(scales=1, base_channels=2, input_mode="stacked", seed=1))
    inp = make_input("stacked", y)
    loss = lambda: ssl_loss(y, net_forward(p, inp), mask, type(PRESET_X4)(1.0, 8.0, 0.5), p, "stacked")
    backward(loss())
    errs["ssl_loss (cycle)"] = max(rel_err(t.grad, numeric_grad(lambda: loss().item(), t.data)) for _, t in p)

    elapsed = time.perf_counter() - start
    worst_name = max(errs, key=errs.get)
    ok = errs[worst_name] < 1e-4 and elapsed < 120
    report(3, ok, f"{len(errs)} checks, worst {worst_name} {errs[worst_name]:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_adam(report):
    p = NetParams({"theta": Tensor(np.array(1.0))})
    got = []
    for _ in range(100):
        th = p["theta"]
        backward(mul(th, th))
        adam_step(p)
        got.append(float(th.data))
    theta, m, v, ref = 1.0, 0.0, 0.0, []
    for t in range(1, 101):
        g = 2 * theta
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 1e-4 * (m / (1 - 0.9**t)) / ((v / (1 - 0.999**t)) ** 0.5 + 1e-8)
        ref.append(theta)
    err = float(np.max(np.abs(np.array(got) - ref)))
    ok = err <= 1e-12
    report(4, ok, f"max trajectory deviation {err:.1e}")
    assert ok


def test_criterion_05_tv(report, rng):
    x = make_phantom(SIZE, seed=PHANTOM_SEED)
    worst_rise = -np.inf
    for task in ["sr4", "dealias4", "sr8", "dealias8"]:
        m = make_task_mask(task, x.shape)
        _, rep = tv_reconstruct(apply_masked_fourier(x, m), m)
        worst_rise = max(worst_rise, float(np.max(np.diff(rep.losses[10:]))))
    full = make_task_mask("full", x.shape)
    y = apply_masked_fourier(x, full)
    out, _ = tv_reconstruct(y, full, tv_weight=0.0)
    err = float(np.max(np.abs(out - y)))
    ok = worst_rise <= 1e-9 and err < 1e-6
    report(5, ok, f"largest objective increase after it 10: {worst_rise:.1e}; weight-0 error {err:.1e}")
    assert ok


def test_criterion_06_ssl_sr4(report, sr4_run):
    r = sr4_run
    ok = r["ssl"] >= r["corrupted"] + 1.5 and r["ssl"] >= r["tv"] and r["time"] <= SSL_BUDGET_S
    report(6, ok, f"corrupted {r['corrupted']:.2f} dB, tv {r['tv']:.2f} dB, ssl {r['ssl']:.2f} dB "
                  f"({SSL_ITERS_CYCLE} its, {r['time']:.0f}s)")
    assert ok


def test_criterion_07_ssl_dealias4(report):
    r = ssl_case("dealias4", SSL_ITERS_CYCLE)
    ok = r["ssl"] >= r["corrupted"] + 3.0 and r["time"] <= SSL_BUDGET_S
    report(7, ok, f"corrupted {r['corrupted']:.2f} dB, tv {r['tv']:.2f} dB, ssl {r['ssl']:.2f} dB "
                  f"({SSL_ITERS_CYCLE} its, {r['time']:.0f}s)")
    assert ok


def test_criterion_08_ssl_dealias8(report):
    r = ssl_case("dealias8", SSL_ITERS_X8)
    ok = r["ssl"] - r["corrupted"] >= 2.0 and r["ssl"] >= r["tv"]
    report(8, ok, f"corrupted {r['corrupted']:.2f} dB, tv {r['tv']:.2f} dB, ssl {r['ssl']:.2f} dB "
                  f"({SSL_ITERS_X8} its, {r['time']:.0f}s)")
    assert ok


def test_criterion_09_supervised_soft(report, sr4_run):
    x = make_phantom(SIZE, seed=PHANTOM_SEED)
    mask = make_task_mask("sr4", x.shape)
    pairs = build_dataset(50, SIZE, mask, seed=1000)
    assert all(np.abs(px - x).sum() > 0 for px, _ in pairs)  # held-out phantom is not in the training set
    start = time.perf_counter()
    params, _ = supervised_train(pairs, NetConfig(input_mode="measurement", seed=0),
                                 FitConfig(max_iters=600, lr=1e-3, batch_size=8, log_every=0))
    elapsed = time.perf_counter() - start
    sup = psnr(x, apply_network(params, apply_masked_fourier(x, mask)))
    gap = sup - sr4_run["ssl"]
    within = gap >= -0.5
    report(9, within, f"supervised {sup:.2f} dB vs ssl {sr4_run['ssl']:.2f} dB (gap {gap:+.2f}, slack -0.5; "
                      f"soft, reported only), {elapsed:.0f}s")
    assert elapsed <= 1200


def test_criterion_10_demo_determinism(report, tmp_path):
    args = ["--task", "sr4", "--size", "32", "--seed", "7", "--iters", "40"]
    blobs = []
    for run in ("a", "b"):
        assert main(["demo", *args, "--out-dir", str(tmp_path / run)]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
    ok = blobs[0] == blobs[1] and len(blobs[0]) == 6
    report(10, ok, f"{len(blobs[0])} files compared byte for byte")
    assert ok


def test_criterion_11_metrics(report):
    rng = np.random.default_rng(11)
    lo, hi = np.inf, -np.inf
    for _ in range(1000):
        a, b = rng.standard_normal((2, 16, 16))
        s = ssim(a, b, data_range=1.0)
        lo, hi = min(lo, s), max(hi, s)
    x = make_phantom(SIZE, seed=PHANTOM_SEED)
    noise = rng.standard_normal(x.shape)
    values = [psnr(x, x + s * noise) for s in (0.01, 0.05, 0.1)]
    ok = (-1 <= lo and hi <= 1 and psnr(x, x) == 100.0 and ssim(x, x) == pytest.approx(1.0, abs=1e-12)
          and values[0] > values[1] > values[2])
    report(11, ok, f"ssim range [{lo:.3f}, {hi:.3f}] over 1000 pairs; psnr {values[0]:.1f} > {values[1]:.1f} > {values[2]:.1f}")
    assert ok
