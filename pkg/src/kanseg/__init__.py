"""Dual-encoder segmentation with a learnable-spline bottleneck."""

from .errors import (
    CheckpointError,
    ConfigurationError,
    DataError,
    InputError,
    KansegError,
    NumericalError,
)
from .model import KanSegNet, ModelConfig, build_model
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "KanSegNet",
    "ModelConfig",
    "TrainConfig",
    "build_model",
    "train",
    "KansegError",
    "ConfigurationError",
    "InputError",
    "DataError",
    "NumericalError",
    "CheckpointError",
    "__version__",
]
