"""
CNN Stream
Point-level encoding, joint-to-channel transpose, raw/motion branches,
channel fusion, 1x7/7x1 residual block and a two-layer classifier.
"""

import logging
from typing import List, Optional

import numpy as np

from thct_net.exceptions import ShapeError
from thct_net.nn import AvgPool2D, BatchNormLayer, Conv2DLayer, LinearLayer, Module
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)


def stack_entities(x: Tensor) -> Tensor:
    """
    Fold entities into the joint axis, entity-major.

    (3, T, V, M) -> (3, T, M*V) or batched (N, 3, T, V, M) -> (N, 3, T, M*V).
    """
    if x.ndim == 4:
        c, t, v, m = x.shape
        return ops.reshape(ops.permute(x, (0, 1, 3, 2)), (c, t, m * v))
    if x.ndim == 5:
        n, c, t, v, m = x.shape
        return ops.reshape(ops.permute(x, (0, 1, 2, 4, 3)), (n, c, t, m * v))
    raise ShapeError(f"Expected (3, T, V, M) or (N, 3, T, V, M), got {x.shape}")


def _conv_bn_relu(conv: Conv2DLayer, norm: Optional[BatchNormLayer], x: Tensor) -> Tensor:
    h = conv(x)
    if norm is not None:
        h = norm(h)
    return ops.relu(h)


class CnnBranch(Module):
    """
    One branch over stacked joints (N, 3, T, VM).

    The 1x1 and 3x1 encoders never mix joints. After the transpose each
    joint is a channel and the (time, feature) plane is convolved, ending
    in the feature conv and a 2x2 average pool.
    """

    def __init__(self, config, rng: np.random.Generator):
        super().__init__()
        dtype = config.numpy_dtype
        stacked = config.joints * config.entities
        point = config.cnn_point_channels
        temporal = config.cnn_temporal_channels
        feature = config.cnn_feature_channels
        use_bn = config.cnn_batchnorm

        self.point = Conv2DLayer(3, point, 1, rng=rng, dtype=dtype)
        self.temporal = Conv2DLayer(point, temporal, (3, 1), padding=(1, 0), rng=rng, dtype=dtype)

        widths = [stacked] + list(config.cnn_transpose_channels)
        self.transposed: List[Conv2DLayer] = [
            Conv2DLayer(c_in, c_out, 3, padding=1, rng=rng, dtype=dtype)
            for c_in, c_out in zip(widths, widths[1:])
        ]
        self.transposed_norms: List[BatchNormLayer] = (
            [BatchNormLayer(c, dtype=dtype) for c in widths[1:]] if use_bn else []
        )
        self.feature = Conv2DLayer(widths[-1], feature, 3, padding=1, rng=rng, dtype=dtype)
        self.feature_norm = BatchNormLayer(feature, dtype=dtype) if use_bn else None
        self.pool = AvgPool2D(2)

    def encode_points(self, x: Tensor) -> Tensor:
        """(N, 3, T, VM) -> (N, temporal channels, T, VM); column j sees joint j only."""
        return ops.relu(self.temporal(ops.relu(self.point(x))))

    def forward(self, x: Tensor) -> Tensor:
        h = self.encode_points(x)
        h = ops.permute(h, (0, 3, 2, 1))  # joints become channels: (N, VM, T, C')
        for i, conv in enumerate(self.transposed):
            norm = self.transposed_norms[i] if self.transposed_norms else None
            h = _conv_bn_relu(conv, norm, h)
        h = _conv_bn_relu(self.feature, self.feature_norm, h)
        return self.pool(h)


def branch_forward(x: Tensor, branch: CnnBranch) -> Tensor:
    return branch(x)


def fuse_branches(f_raw: Tensor, f_motion: Tensor) -> Tensor:
    """Channel concatenation, raw first. Works on (C, H, W) and (N, C, H, W)."""
    if f_raw.ndim != f_motion.ndim or f_raw.ndim not in (3, 4):
        raise ShapeError(f"Cannot fuse {f_raw.shape} with {f_motion.shape}")
    axis = f_raw.ndim - 3
    if f_raw.shape[:axis] + f_raw.shape[axis + 1:] != f_motion.shape[:axis] + f_motion.shape[axis + 1:]:
        raise ShapeError(f"Branch outputs differ outside channels: {f_raw.shape} vs {f_motion.shape}")
    return ops.concat([f_raw, f_motion], axis=axis)


class ResidualBlock(Module):
    """relu(skip(x) + conv7x1(relu(conv1x7(x)))); spatial extent is preserved."""

    def __init__(self, in_channels: int, out_channels: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None, dtype=np.float32):
        super().__init__()
        out_channels = out_channels or in_channels
        self.conv_row = Conv2DLayer(in_channels, out_channels, (1, 7), padding=(0, 3), rng=rng, dtype=dtype)
        self.conv_col = Conv2DLayer(out_channels, out_channels, (7, 1), padding=(3, 0), rng=rng, dtype=dtype)
        self.projection = (
            Conv2DLayer(in_channels, out_channels, 1, rng=rng, dtype=dtype)
            if in_channels != out_channels else None
        )

    def forward(self, x: Tensor) -> Tensor:
        skip = self.projection(x) if self.projection is not None else x
        path = self.conv_col(ops.relu(self.conv_row(x)))
        return ops.relu(ops.add(skip, path))


def residual_block(x: Tensor, block: ResidualBlock) -> Tensor:
    return block(x)


class CnnStream(Module):
    """Two branches -> fuse -> residual -> pool -> flatten -> FC -> relu -> FC."""

    def __init__(self, config, rng: np.random.Generator):
        super().__init__()
        dtype = config.numpy_dtype
        fused = 2 * config.cnn_feature_channels
        self.raw = CnnBranch(config, rng)
        self.motion = CnnBranch(config, rng)
        self.residual = ResidualBlock(fused, rng=rng, dtype=dtype)
        self.pool = AvgPool2D(2)
        self.hidden = LinearLayer(config.cnn_flat_features, config.cnn_hidden, rng=rng, dtype=dtype)
        self.classifier = LinearLayer(config.cnn_hidden, config.num_classes, rng=rng, dtype=dtype)

    def features(self, coords: Tensor, motion: Tensor) -> Tensor:
        """Fused branch features before the residual block."""
        if coords.shape != motion.shape:
            raise ShapeError(f"coords {coords.shape} and motion {motion.shape} differ")
        return fuse_branches(self.raw(stack_entities(coords)), self.motion(stack_entities(motion)))

    def forward(self, coords: Tensor, motion: Tensor) -> Tensor:
        """(N, 3, T, V, M) twice -> (N, num_classes) logits."""
        h = self.pool(self.residual(self.features(coords, motion)))
        flat = ops.reshape(h, (h.shape[0], -1))
        return self.classifier(ops.relu(self.hidden(flat)))


def cnn_forward(coords: Tensor, motion: Tensor, stream: CnnStream) -> Tensor:
    return stream(coords, motion)
