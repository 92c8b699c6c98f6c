"""Spatial-spectral residual CNN denoiser for hyperspectral image cubes.

The package covers the full workflow: parametric noise simulation over a
clean cube, patch-based training of the residual network with Adam,
band-by-band whole-cube inference, and PSNR/SSIM/spectral-angle evaluation.
All numerics run on numpy with hand-derived backward passes; every random
draw is pinned to explicit seeds.
"""

from .cube import HsiCube, load_cube, normalize_bands, save_cube
from .errors import (
    BadDimensionsError,
    BadMagicError,
    BandWindowError,
    ConfigError,
    DenoiseError,
    DivergenceError,
    FormatVersionError,
    NotNormalizedError,
    ShapeMismatchError,
    TruncatedFileError,
)
from .inference import DenoiseJob, denoise_cube, run_denoise_job
from .metrics import QualityReport, msa, psnr, report, ssim
from .model import (
    ArchitectureSpec,
    ModelParams,
    backward,
    denoise_patch,
    forward,
    init_params,
    zero_params,
)
from .noise import NoiseSpec, add_noise, sigma_profile
from .pipeline import (
    AugmentSpec,
    PatchSample,
    Rect,
    adjacent_bands,
    augment,
    extract_patches,
    split_spatial,
)
from .training import (
    AdamState,
    OptimizerConfig,
    TrainConfig,
    adam_step,
    residual_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArchitectureSpec",
    "AugmentSpec",
    "BadDimensionsError",
    "BadMagicError",
    "BandWindowError",
    "ConfigError",
    "DenoiseError",
    "DenoiseJob",
    "DivergenceError",
    "FormatVersionError",
    "HsiCube",
    "ModelParams",
    "NoiseSpec",
    "NotNormalizedError",
    "OptimizerConfig",
    "PatchSample",
    "QualityReport",
    "Rect",
    "ShapeMismatchError",
    "TrainConfig",
    "TruncatedFileError",
    "adam_step",
    "add_noise",
    "adjacent_bands",
    "augment",
    "backward",
    "denoise_cube",
    "denoise_patch",
    "extract_patches",
    "forward",
    "init_params",
    "load_cube",
    "msa",
    "normalize_bands",
    "psnr",
    "report",
    "residual_loss",
    "run_denoise_job",
    "save_cube",
    "sigma_profile",
    "split_spatial",
    "ssim",
    "train",
    "zero_params",
]
