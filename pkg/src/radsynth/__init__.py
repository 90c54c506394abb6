"""Panoramic radiograph synthesis: diffusion sampling, attention-based 4x
super-resolution, generative metrics, and a timed observer study service."""

from .errors import ConfigError, ConflictError, DataError, NumericError, SequencingError
from .grid import ImageGrid, Resolution, load_png, resize_lanczos, save_png
from .schedules import (
    EmaSchedule,
    NoiseSchedule,
    cosine_schedule,
    ddim_subsequence,
    ema_gamma,
    linear_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConflictError",
    "DataError",
    "NumericError",
    "SequencingError",
    "ImageGrid",
    "Resolution",
    "load_png",
    "save_png",
    "resize_lanczos",
    "NoiseSchedule",
    "EmaSchedule",
    "cosine_schedule",
    "linear_schedule",
    "ema_gamma",
    "ddim_subsequence",
    "__version__",
]
