"""Modality-specific featured attention and query-based multi-sensor fusion on a small autodiff core."""

from .config import RunConfig, load_config, profile
from .fusion import ConfigurationError
from .pipeline import forward, init_model, overfit, run_pipeline
from .scene import generate_scene
from .tensor import Tensor

__all__ = [
    "ConfigurationError",
    "RunConfig",
    "Tensor",
    "forward",
    "generate_scene",
    "init_model",
    "load_config",
    "overfit",
    "profile",
    "run_pipeline",
]
