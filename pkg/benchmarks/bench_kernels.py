"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Reports the best-of-N time per call for im2col, col2im, the row FFT and one
full forward+backward+Adam step of the default network on a 64x64 measurement.
"""

import argparse
import timeit

import numpy as np

from sslrecon import _pykernels, kernels
from sslrecon.data_eval import make_phantom
from sslrecon.forward_models import apply_masked_fourier, make_task_mask
from sslrecon.prior_net import NetConfig, build_network, make_input, net_forward
from sslrecon.solvers import PRESET_X4, ssl_loss
from sslrecon.tensor import adam_step, backward

try:
    from sslrecon import _ckernels
except ImportError:
    _ckernels = None


def use(impl):
    kernels.im2col, kernels.col2im, kernels.fft_rows = impl.im2col, impl.col2im, impl.fft_rows


def cases():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 64, 64))
    cols = rng.standard_normal((16 * 9, 64 * 64))
    rows = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))

    img = make_phantom(64, seed=0)
    mask = make_task_mask("sr4", img.shape)
    y = apply_masked_fourier(img, mask)
    params = build_network(NetConfig(input_mode="stacked"))
    inp = make_input("stacked", y)

    def step():
        loss = ssl_loss(y, net_forward(params, inp), mask, PRESET_X4, params, "stacked")
        backward(loss)
        adam_step(params)

    return {
        "im2col 16x64x64 k3": lambda: kernels.im2col(x, 3, 1, 1),
        "col2im 16x64x64 k3": lambda: kernels.col2im(cols, 16, 64, 64, 3, 1, 1),
        "fft_rows 64x64": lambda: kernels.fft_rows(rows),
        "ssl step 64x64": step,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    timings = {}
    for name, impl in backends:
        use(impl)
        for label, fn in cases().items():
            number = 3 if label.startswith("ssl") else 50
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            timings.setdefault(label, {})[name] = best
    print(f"{'case':24s}" + "".join(f"{n:>12s}" for n, _ in backends) + ("     speedup" if _ckernels else ""))
    for label, row in timings.items():
        line = f"{label:24s}" + "".join(f"{row[n] * 1e3:10.3f}ms" for n, _ in backends)
        if _ckernels:
            line += f"{row['python'] / row['cython']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
