"""
hazelab - Desk-scale wavelet and contrastive single image dehazing.
"""

# hazelab - Haze synthesis, a dark channel baseline, a semi-supervised GAN dehazer and its metrics

__version__ = "0.1.0"

from ._validation import HazelabError
from .config import HazelabSettings, load_run_config, settings
from .haze import HazeScene, dcp_dehaze, invert_haze, synthesize_haze, transmission_from_depth
from .metrics import psnr, ssim
from .models import GeneratorConfig, LossWeights, RunConfig, TrainConfig
from .network import build_discriminator, build_generator, generator_forward
from .tensor import Tape, Tensor4, backward
from .trainer import dehaze_image, train
from .wavelet import dwt2, iwt2

__all__ = [
    "__version__",
    "HazelabError",
    "HazelabSettings",
    "settings",
    "load_run_config",
    "HazeScene",
    "transmission_from_depth",
    "synthesize_haze",
    "invert_haze",
    "dcp_dehaze",
    "psnr",
    "ssim",
    "GeneratorConfig",
    "LossWeights",
    "RunConfig",
    "TrainConfig",
    "build_generator",
    "build_discriminator",
    "generator_forward",
    "Tape",
    "Tensor4",
    "backward",
    "train",
    "dehaze_image",
    "dwt2",
    "iwt2",
]
