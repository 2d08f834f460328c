"""Optics-guided thermal super-resolution with physics-constrained training."""

from .config import (
    ExperimentConfig,
    LossWeights,
    ModelConfig,
    OptimizerConfig,
    parse_config,
    parse_config_text,
)
from .errors import ConfigurationError, InvalidInputError, TrainingDivergedError

__all__ = [
    "ExperimentConfig",
    "LossWeights",
    "ModelConfig",
    "OptimizerConfig",
    "parse_config",
    "parse_config_text",
    "ConfigurationError",
    "InvalidInputError",
    "TrainingDivergedError",
]

__version__ = "0.1.0"
