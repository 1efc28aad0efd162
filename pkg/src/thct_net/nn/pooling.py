"""Pooling helpers."""

from thct_net.exceptions import ShapeError
from thct_net.nn.base import Module
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


def gap(x: Tensor) -> Tensor:
    """Global average pooling: (N, C, *spatial) -> (N, C)."""
    if x.ndim < 3:
        raise ShapeError(f"gap needs at least one spatial axis, got shape {x.shape}")
    return ops.mean(x, axis=tuple(range(2, x.ndim)))


class AvgPool2D(Module):
    """k×k average pooling with stride k; trailing rows/columns are cropped."""

    def __init__(self, kernel: int = 2):
        super().__init__()
        self.kernel = kernel

    def forward(self, x: Tensor) -> Tensor:
        return ops.avg_pool2d(x, self.kernel)

    def output_shape(self, height: int, width: int):
        return height // self.kernel, width // self.kernel
