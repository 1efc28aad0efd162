"""
Batch Normalization Layer
Per-channel normalization with running statistics.
"""

import logging
from typing import Optional

import numpy as np

from thct_net.nn.base import Module
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_MOMENTUM = 0.1


class BatchNormLayer(Module):
    """
    Normalizes axis 1 of (N, C, ...) inputs.

    Train mode uses batch statistics and folds them into the running
    statistics (unbiased variance). Eval mode applies the running
    statistics as constants and leaves them untouched.
    """

    def __init__(
        self,
        num_features: int,
        eps: float = DEFAULT_EPS,
        momentum: float = DEFAULT_MOMENTUM,
        dtype=np.float32,
    ):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(num_features), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(num_features), requires_grad=True, dtype=dtype)
        self._buffers["running_mean"] = np.zeros(num_features, dtype=dtype)
        self._buffers["running_var"] = np.ones(num_features, dtype=dtype)

    @property
    def running_mean(self) -> np.ndarray:
        return self._buffers["running_mean"]

    @property
    def running_var(self) -> np.ndarray:
        return self._buffers["running_var"]

    def forward(self, x: Tensor, mode: Optional[str] = None) -> Tensor:
        """
        Args:
            x: (N, C, ...) input.
            mode: "train" or "eval"; defaults to the module's training flag.
        """
        train = self.training if mode is None else mode == "train"
        if not train:
            out, _, _ = ops.batch_norm(
                x, self.gamma, self.beta, self.eps,
                running=(self.running_mean, self.running_var),
            )
            return out

        out, mean, var = ops.batch_norm(x, self.gamma, self.beta, self.eps)
        count = x.size // x.shape[1]
        unbiased = var * (count / max(count - 1, 1))
        m = self.momentum
        dtype = self.running_mean.dtype
        self._buffers["running_mean"] = ((1.0 - m) * self.running_mean + m * mean).astype(dtype)
        self._buffers["running_var"] = ((1.0 - m) * self.running_var + m * unbiased).astype(dtype)
        return out


def batchnorm_forward(layer: BatchNormLayer, x: Tensor, mode: str) -> Tensor:
    return layer(x, mode=mode)
