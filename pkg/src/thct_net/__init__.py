"""
THCT-Net - Two-Stream Skeleton Interaction Recognition

A Transformer stream over windowed skeleton tokens and a CNN stream over
stacked joints, trained on CPU with a small reverse-mode autograd engine
and late-fused at inference.
"""

from thct_net.config import ModelConfig
from thct_net.exceptions import (
    CheckpointError,
    ConfigurationError,
    DataError,
    NumericalError,
    ShapeError,
    THCTError,
    UsageError,
)
from thct_net.models import THCTNet
from thct_net.tensor import Tensor, grad_check, no_grad

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "DataError",
    "ModelConfig",
    "NumericalError",
    "ShapeError",
    "THCTError",
    "THCTNet",
    "Tensor",
    "UsageError",
    "grad_check",
    "no_grad",
]
