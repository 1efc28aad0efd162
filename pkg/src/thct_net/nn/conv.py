"""
Convolution Layers
2D and 3D cross-correlation layers over the conv_nd kernel.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.nn.base import Module
from thct_net.nn.init import kaiming_uniform
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)

IntOrSeq = Union[int, Sequence[int]]


def _expand(value: IntOrSeq, n: int, name: str) -> Tuple[int, ...]:
    if isinstance(value, int):
        value = (value,) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ConfigurationError(f"{name} needs {n} entries, got {value}")
    return value


class _ConvLayer(Module):
    """Shared weight/bias handling for N-d convolution layers."""

    spatial_dims = 0

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: IntOrSeq,
        stride: IntOrSeq = 1,
        padding: IntOrSeq = 0,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        super().__init__()
        if in_channels < 1 or out_channels < 1:
            raise ConfigurationError(
                f"Channel counts must be positive, got {in_channels} -> {out_channels}"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = _expand(kernel_size, self.spatial_dims, "kernel_size")
        self.stride = _expand(stride, self.spatial_dims, "stride")
        self.padding = _expand(padding, self.spatial_dims, "padding")
        if any(k < 1 for k in self.kernel_size) or any(s < 1 for s in self.stride):
            raise ConfigurationError(f"Invalid kernel {self.kernel_size} / stride {self.stride}")

        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * int(np.prod(self.kernel_size))
        shape = (out_channels, in_channels) + self.kernel_size
        self.weight = Tensor(kaiming_uniform(shape, fan_in, rng, dtype), requires_grad=True, dtype=dtype)
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, dtype=dtype)

    def output_shape(self, spatial: Sequence[int]) -> Tuple[int, ...]:
        return tuple(
            ops.conv_output_extent(s, k, st, p)
            for s, k, st, p in zip(spatial, self.kernel_size, self.stride, self.padding)
        )

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != self.spatial_dims + 2:
            raise ShapeError(
                f"{type(self).__name__} expects rank {self.spatial_dims + 2} input, got {x.shape}"
            )
        return ops.conv_nd(x, self.weight, self.bias, self.stride, self.padding)

    def __repr__(self) -> str:
        return (f"{type(self).__name__}({self.in_channels}, {self.out_channels}, "
                f"kernel={self.kernel_size}, stride={self.stride}, padding={self.padding})")


class Conv2DLayer(_ConvLayer):
    """(N, C_in, H, W) -> (N, C_out, H', W')"""
    spatial_dims = 2


class Conv3DLayer(_ConvLayer):
    """(N, C_in, D_t, D_v, D_m) -> (N, C_out, D_t', D_v', D_m')"""
    spatial_dims = 3


def conv2d_forward(layer: Conv2DLayer, x: Tensor) -> Tensor:
    return layer(x)


def conv3d_forward(layer: Conv3DLayer, x: Tensor) -> Tensor:
    return layer(x)
