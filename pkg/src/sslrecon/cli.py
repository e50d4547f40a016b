"""Command-line entry point: mask, simulate, reconstruct, eval, train-supervised, demo.

Every command accepts ``--config FILE`` with ``key = value`` lines; flags given on
the command line win over the file. The fully resolved configuration is echoed
to stdout. Relative output paths are placed under ``$SSLRECON_OUTPUT_ROOT`` when
that variable is set.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .data_eval import (
    EvalRecord,
    append_csv,
    build_dataset,
    make_phantom,
    psnr,
    read_image,
    read_raw,
    ssim,
    write_pgm,
    write_raw,
)
from .forward_models import (
    DEFAULT_CENTER_FRACTION,
    MeasurementSimConfig,
    make_dealiasing_mask,
    make_sr_mask,
    make_task_mask,
    read_pbm,
    simulate_measurement,
    write_pbm,
)
from .prior_net import NetConfig, load_checkpoint, save_checkpoint
from .solvers import (
    DivergenceError,
    FitConfig,
    LossWeights,
    reconstruct,
    supervised_train,
    task_preset,
)
from .tensor import ShapeError

OUTPUT_ROOT_ENV = "SSLRECON_OUTPUT_ROOT"


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type, default)
CONFIG_KEYS = {
    "task": (str, None),
    "method": (str, None),
    "af": (int, None),
    "center_fraction": (float, None),
    "size": (int, 64),
    "phantom": (str, "ellipses"),
    "noise_std": (float, 0.0),
    "seed": (int, None),
    "alpha": (float, None),
    "beta": (float, None),
    "gamma": (float, None),
    "scales": (int, 3),
    "base_channels": (int, 16),
    "kernel_size": (int, 3),
    "leaky_slope": (float, 0.1),
    "input_mode": (str, None),
    "normalize": (_bool, False),
    "max_iters": (int, 2000),
    "lr": (float, 1e-4),
    "track_best": (_bool, True),
    "log_every": (int, 100),
    "early_stop": (_bool, False),
    "batch_size": (int, 8),
    "n_train": (int, 50),
    "tv_weight": (float, 0.01),
    "tv_iters": (int, 200),
    "image": (str, None),
    "mask": (str, None),
    "measurement": (str, None),
    "ground_truth": (str, None),
    "checkpoint": (str, None),
    "out": (str, None),
    "out_dir": (str, None),
}


class UsageError(Exception):
    pass


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key][0](val)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args):
    cfg = {k: default for k, (_, default) in CONFIG_KEYS.items()}
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def echo_config(cfg, keys):
    for key in keys:
        print(f"config {key} = {cfg[key]}")


def out_path(path):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def _net_config(cfg, input_mode):
    return NetConfig(
        scales=cfg["scales"],
        base_channels=cfg["base_channels"],
        kernel_size=cfg["kernel_size"],
        leaky_slope=cfg["leaky_slope"],
        input_mode=input_mode,
        seed=cfg["seed"],
        normalize=cfg["normalize"],
    )


def _fit_config(cfg):
    return FitConfig(
        max_iters=cfg["max_iters"],
        lr=cfg["lr"],
        track_best=cfg["track_best"],
        log_every=cfg["log_every"],
        early_stop=cfg["early_stop"],
        batch_size=cfg["batch_size"],
    )


def _task_from_mask(mask):
    af = int(mask.acceleration_factor)
    if mask.geometry == "superresolution" and af in (4, 8):
        return f"sr{af}"
    if mask.geometry == "dealiasing" and af in (4, 8):
        return f"dealias{af}"
    return None


def _resolve_ssl(cfg, task):
    """Fill loss weights and input mode from the task preset where not set explicitly."""
    preset, mode = task_preset(task) if task else (LossWeights(), "stacked")
    for key in ("alpha", "beta", "gamma"):
        if cfg[key] is None:
            cfg[key] = getattr(preset, key)
    if cfg["input_mode"] is None:
        cfg["input_mode"] = mode
    return LossWeights(cfg["alpha"], cfg["beta"], cfg["gamma"])


SSL_KEYS = ["alpha", "beta", "gamma", "input_mode", "scales", "base_channels", "kernel_size",
            "leaky_slope", "normalize", "max_iters", "lr", "track_best", "early_stop", "seed"]


# -- commands --------------------------------------------------------------


def cmd_mask(cfg):
    require(cfg, "task", "af", "out")
    task, af = cfg["task"], cfg["af"]
    shape = (cfg["size"], cfg["size"])
    try:
        if task == "sr":
            mask = make_sr_mask(shape, af)
        elif task == "dealias":
            if cfg["center_fraction"] is None:
                cfg["center_fraction"] = DEFAULT_CENTER_FRACTION.get(af, 0.0)
            mask = make_dealiasing_mask(shape, af, cfg["center_fraction"])
        elif task == "full":
            mask = make_sr_mask(shape, 1)
        else:
            raise ValueError(f"unknown mask task {task!r}; expected sr, dealias or full")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    echo_config(cfg, ["task", "af", "center_fraction", "size", "out"])
    path = out_path(cfg["out"])
    write_pbm(path, mask)
    print(f"sampled_fraction {mask.sampled_fraction:.6g}")
    print(f"wrote {path}")


def _preview_path(path):
    stem, ext = os.path.splitext(path)
    return stem + ".pgm" if ext != ".pgm" else stem + "_preview.pgm"


def cmd_simulate(cfg):
    require(cfg, "image", "mask", "out", "seed")
    echo_config(cfg, ["image", "mask", "noise_std", "seed", "out"])
    x = read_image(cfg["image"])
    mask = read_pbm(cfg["mask"])
    if x.shape != mask.shape:
        raise ShapeError(f"image shape {x.shape} does not match mask shape {mask.shape}")
    y = simulate_measurement(x, mask, MeasurementSimConfig(cfg["noise_std"], cfg["seed"]))
    path = out_path(cfg["out"])
    write_raw(path, y)
    preview = _preview_path(path)
    write_pgm(preview, np.abs(y))
    print(f"wrote {path}")
    print(f"wrote {preview}")


def _write_recon(prefix, x_hat, report):
    prefix = out_path(prefix)
    write_pgm(prefix + ".pgm", x_hat)
    write_raw(prefix + ".raw", x_hat)
    report.write_csv(prefix + "_trace.csv")
    with open(prefix + "_summary.txt", "w") as fh:
        fh.write(report.summary())
    return prefix


def cmd_reconstruct(cfg):
    require(cfg, "method", "measurement", "mask", "out")
    method = cfg["method"]
    y = read_raw(cfg["measurement"])
    y = y.astype(np.complex128)
    mask = read_pbm(cfg["mask"])
    if y.shape != mask.shape:
        raise ShapeError(f"measurement shape {y.shape} does not match mask shape {mask.shape}")
    gt = read_image(cfg["ground_truth"]) if cfg["ground_truth"] else None
    if method == "tv":
        echo_config(cfg, ["method", "tv_weight", "tv_iters", "measurement", "mask", "out"])
        x_hat, report = reconstruct("tv", y, mask, tv_weight=cfg["tv_weight"], tv_iters=cfg["tv_iters"],
                                    ground_truth=gt)
    elif method == "ssl":
        require(cfg, "seed")
        task = cfg["task"] or _task_from_mask(mask)
        cfg["task"] = task
        weights = _resolve_ssl(cfg, task)
        echo_config(cfg, ["method", "task"] + SSL_KEYS + ["measurement", "mask", "out"])
        x_hat, report = reconstruct("ssl", y, mask, weights=weights,
                                    net_cfg=_net_config(cfg, cfg["input_mode"]),
                                    fit_cfg=_fit_config(cfg), ground_truth=gt)
    elif method == "supervised-apply":
        require(cfg, "checkpoint")
        echo_config(cfg, ["method", "checkpoint", "measurement", "mask", "out"])
        params = load_checkpoint(cfg["checkpoint"])
        x_hat, report = reconstruct("supervised-apply", y, mask, params=params, ground_truth=gt)
    else:
        raise UsageError(f"unknown method {method!r}; expected ssl, tv or supervised-apply")
    prefix = _write_recon(cfg["out"], x_hat, report)
    print(f"iterations {report.iterations}  wall_time {report.wall_time:.2f}s")
    if report.psnr is not None:
        print(f"psnr {report.psnr:.4f}  ssim {report.ssim:.4f}")
    print(f"wrote {prefix}.pgm {prefix}.raw {prefix}_trace.csv {prefix}_summary.txt")


def cmd_eval(cfg, test_paths):
    require(cfg, "ground_truth", "out")
    echo_config(cfg, ["ground_truth", "out"])
    ref = read_image(cfg["ground_truth"])
    rows, failed = [], 0
    for path in test_paths:
        try:
            img = read_image(path)
            rows.append([path, f"{psnr(ref, img):.6f}", f"{ssim(ref, img):.6f}"])
        except (ShapeError, OSError, ValueError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            failed += 1
    csv_path = out_path(cfg["out"])
    append_csv(csv_path, ["path", "psnr", "ssim"], rows)
    for row in rows:
        print(",".join(row))
    return 1 if failed else 0


def cmd_train_supervised(cfg):
    require(cfg, "task", "seed", "out")
    task = cfg["task"]
    size = cfg["size"]
    mask = make_task_mask(task, (size, size), cfg["center_fraction"])
    if cfg["input_mode"] is None:
        cfg["input_mode"] = "measurement"
    echo_config(cfg, ["task", "size", "n_train", "seed", "input_mode", "scales", "base_channels",
                      "max_iters", "lr", "batch_size", "out"])
    pairs = build_dataset(cfg["n_train"], size, mask, seed=cfg["seed"], kind=cfg["phantom"],
                          noise_std=cfg["noise_std"])
    params, report = supervised_train(pairs, _net_config(cfg, cfg["input_mode"]), _fit_config(cfg))
    path = out_path(cfg["out"])
    save_checkpoint(path, params)
    report.write_csv(os.path.splitext(path)[0] + "_trace.csv")
    print(f"final_loss {report.final_loss:.6g}  wall_time {report.wall_time:.2f}s")
    print(f"wrote {path}")


DEMO_COLUMNS = ("gt", "corrupted", "tv", "ssl")


def run_demo(task, size, seed, out_dir, cfg):
    """Phantom -> mask -> measurement -> TV and SSL -> images, montage and report.csv."""
    x = make_phantom(size, cfg["phantom"], seed)
    mask = make_task_mask(task, x.shape, cfg["center_fraction"])
    y = simulate_measurement(x, mask, MeasurementSimConfig(cfg["noise_std"], seed))
    weights = _resolve_ssl(cfg, task)
    x_tv, _ = reconstruct("tv", y, mask, tv_weight=cfg["tv_weight"], tv_iters=cfg["tv_iters"])
    net_cfg = _net_config(cfg, cfg["input_mode"])
    x_ssl, _ = reconstruct("ssl", y, mask, weights=weights, net_cfg=net_cfg, fit_cfg=_fit_config(cfg))
    images = {"gt": x, "corrupted": np.abs(y), "tv": x_tv, "ssl": x_ssl}

    os.makedirs(out_dir, exist_ok=True)
    for name in DEMO_COLUMNS:
        write_pgm(os.path.join(out_dir, f"{name}.pgm"), images[name])
    gap = np.ones((size, 2))
    montage = np.concatenate(sum(([images[n], gap] for n in DEMO_COLUMNS), [])[:-1], axis=1)
    write_pgm(os.path.join(out_dir, "montage.pgm"), montage)
    records = [EvalRecord(task, name, psnr(x, images[name]), ssim(x, images[name])) for name in DEMO_COLUMNS[1:]]
    report = os.path.join(out_dir, "report.csv")
    if os.path.exists(report):
        os.remove(report)
    append_csv(report, ["task", "method", "psnr", "ssim"],
               [[r.task, r.method, f"{r.psnr:.6f}", f"{r.ssim:.6f}"] for r in records])
    return records


def cmd_demo(cfg):
    require(cfg, "task", "seed", "out_dir")
    task = cfg["task"]
    if task not in ("sr4", "dealias4", "sr8", "dealias8"):
        raise UsageError(f"unknown demo task {task!r}")
    _resolve_ssl(cfg, task)
    echo_config(cfg, ["task", "size", "seed", "phantom", "noise_std", "tv_weight", "tv_iters"] + SSL_KEYS + ["out_dir"])
    out_dir = out_path(cfg["out_dir"])
    records = run_demo(task, cfg["size"], cfg["seed"], out_dir, cfg)
    for r in records:
        print(f"{r.method:10s} psnr {r.psnr:7.3f}  ssim {r.ssim:.4f}")
    print(f"wrote {out_dir}")


# -- argument parsing ------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)


def _add_net_flags(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--input-mode", dest="input_mode", choices=["measurement", "meshgrid", "stacked"])
    p.add_argument("--scales", type=int)
    p.add_argument("--base-channels", dest="base_channels", type=int)
    p.add_argument("--max-iters", "--iters", dest="max_iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--log-every", dest="log_every", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="sslrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="write a k-space sampling mask (P1 PBM)")
    _add_common(p)
    p.add_argument("--task", choices=["sr", "dealias", "full"])
    p.add_argument("--af", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--center-fraction", dest="center_fraction", type=float)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="simulate a measurement from an image and a mask")
    _add_common(p)
    p.add_argument("--image")
    p.add_argument("--mask")
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--out")

    p = sub.add_parser("reconstruct", help="reconstruct an image from a measurement")
    _add_common(p)
    p.add_argument("--method", choices=["ssl", "tv", "supervised-apply"])
    p.add_argument("--measurement")
    p.add_argument("--mask")
    p.add_argument("--task", choices=["sr4", "dealias4", "sr8", "dealias8"])
    p.add_argument("--checkpoint")
    p.add_argument("--ground-truth", dest="ground_truth")
    p.add_argument("--tv-weight", dest="tv_weight", type=float)
    p.add_argument("--tv-iters", dest="tv_iters", type=int)
    p.add_argument("--out-prefix", "--out", dest="out")
    _add_net_flags(p)

    p = sub.add_parser("eval", help="PSNR/SSIM of test images against a reference")
    _add_common(p)
    p.add_argument("--ref", dest="ground_truth")
    p.add_argument("--out")
    p.add_argument("tests", nargs="+")

    p = sub.add_parser("train-supervised", help="train the network on synthetic aligned pairs")
    _add_common(p)
    p.add_argument("--task", choices=["sr4", "dealias4", "sr8", "dealias8"])
    p.add_argument("--n", dest="n_train", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--out")
    _add_net_flags(p)

    p = sub.add_parser("demo", help="phantom -> measurement -> TV and SSL -> report")
    _add_common(p)
    p.add_argument("--task", choices=["sr4", "dealias4", "sr8", "dealias8"])
    p.add_argument("--size", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    _add_net_flags(p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "mask":
            cmd_mask(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg)
        elif args.command == "eval":
            return cmd_eval(cfg, args.tests)
        elif args.command == "train-supervised":
            cmd_train_supervised(cfg)
        elif args.command == "demo":
            cmd_demo(cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
