"""Self-supervised reconstruction of undersampled k-space measurements with a
convolutional prior, plus TV-regularized and supervised baselines.
"""

__version__ = "0.1.0"

from .kernels import BACKEND
from .data_eval import make_phantom, psnr, ssim
from .forward_models import (
    SamplingMask,
    apply_masked_fourier,
    make_dealiasing_mask,
    make_sr_mask,
    make_task_mask,
    simulate_measurement,
)
from .prior_net import NetConfig, build_network, make_input, net_forward
from .solvers import (
    FitConfig,
    LossWeights,
    ReconReport,
    reconstruct,
    ssl_fit,
    ssl_loss,
    supervised_train,
    tv_reconstruct,
)

__all__ = [
    "BACKEND",
    "FitConfig",
    "LossWeights",
    "NetConfig",
    "ReconReport",
    "SamplingMask",
    "apply_masked_fourier",
    "build_network",
    "make_dealiasing_mask",
    "make_input",
    "make_phantom",
    "make_sr_mask",
    "make_task_mask",
    "net_forward",
    "psnr",
    "reconstruct",
    "simulate_measurement",
    "ssim",
    "ssl_fit",
    "ssl_loss",
    "supervised_train",
    "tv_reconstruct",
]
