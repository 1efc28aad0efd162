"""Fully-connected layer."""

from typing import Optional

import numpy as np

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.nn.base import Module
from thct_net.nn.init import kaiming_uniform
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


class LinearLayer(Module):
    """x @ weight.T + bias; weight is (out_features, in_features)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"Invalid linear size {in_features} -> {out_features}")
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(
            kaiming_uniform((out_features, in_features), in_features, rng, dtype),
            requires_grad=True, dtype=dtype,
        )
        self.bias = Tensor(np.zeros(out_features), requires_grad=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"LinearLayer expects {self.in_features} features, got shape {x.shape}"
            )
        return ops.linear(x, self.weight, self.bias)


def linear_forward(layer: LinearLayer, x: Tensor) -> Tensor:
    return layer(x)
