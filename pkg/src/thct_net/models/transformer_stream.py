"""
Transformer Stream
Window tokenization, tanh-regularized multi-head attention blocks, temporal
aggregation and the GAP + FC head.

Tokens are kept in grid form (N, D, T/T_w, V/V_w, M/M_w) throughout, so the
1x1x1 convolutions act as per-token projections.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.nn import BatchNormLayer, Conv3DLayer, LinearLayer, Module, gap
from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)

# Initial values of the attention regularizers
ALPHA_INIT = 1.0
TEMPORAL_KERNEL = 5


@dataclass(frozen=True)
class WindowSpec:
    """Non-overlapping 3D window over (time, joint, entity)."""
    t: int
    v: int
    m: int

    @property
    def volume(self) -> int:
        return self.t * self.v * self.m

    def token_grid(self, frames: int, joints: int, entities: int) -> Tuple[int, int, int]:
        """(T // t, V // v, M // m); remainders are dropped."""
        if min(self.t, self.v, self.m) < 1:
            raise ShapeError(f"Window extents must be positive, got {self}")
        if self.t > frames or self.v > joints or self.m > entities:
            raise ShapeError(
                f"Window ({self.t}, {self.v}, {self.m}) exceeds input ({frames}, {joints}, {entities})"
            )
        return frames // self.t, joints // self.v, entities // self.m

    def token_count(self, frames: int, joints: int, entities: int) -> int:
        tt, vt, mt = self.token_grid(frames, joints, entities)
        return tt * vt * mt


def tokens_grid(x: Tensor, window: WindowSpec) -> Tensor:
    """
    (N, C, T, V, M) -> (N, C*t*v*m, T/t, V/v, M/m).

    Channel index is c*t*v*m + (dt*v + dv)*m + dm, i.e. each token is its
    window flattened in (C, t, v, m) order.
    """
    if x.ndim != 5:
        raise ShapeError(f"Expected (N, C, T, V, M), got {x.shape}")
    n, c, frames, joints, entities = x.shape
    tt, vt, mt = window.token_grid(frames, joints, entities)
    for axis, keep in ((2, tt * window.t), (3, vt * window.v), (4, mt * window.m)):
        if keep != x.shape[axis]:
            x = ops.slice_axis(x, axis, 0, keep)
    y = ops.reshape(x, (n, c, tt, window.t, vt, window.v, mt, window.m))
    y = ops.permute(y, (0, 1, 3, 5, 7, 2, 4, 6))
    return ops.reshape(y, (n, c * window.volume, tt, vt, mt))


def tokenize(x: Union[Tensor, np.ndarray], window: WindowSpec) -> Tuple[Tensor, np.ndarray]:
    """
    One sample (C, T, V, M) -> tokens (U, C*t*v*m) plus window origins (U, 3).

    Tokens enumerate windows time-major, then joint, then entity.

    Raises:
        ShapeError: If the window does not fit (U would be 0).
    """
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x))
    if x.ndim != 4:
        raise ShapeError(f"Expected (C, T, V, M), got {x.shape}")
    grid = tokens_grid(ops.reshape(x, (1,) + x.shape), window)
    _, width, tt, vt, mt = grid.shape
    tokens = ops.permute(ops.reshape(grid, (width, tt * vt * mt)), (1, 0))
    origins = np.stack(np.unravel_index(np.arange(tt * vt * mt), (tt, vt, mt)), axis=1)
    origins = origins * np.array([window.t, window.v, window.m])
    return tokens, origins


def untokenize(tokens: np.ndarray, origins: np.ndarray, window: WindowSpec, channels: int) -> np.ndarray:
    """Scatter tokens back to (C, covered T, covered V, covered M)."""
    extent = origins.max(axis=0) + np.array([window.t, window.v, window.m])
    out = np.zeros((channels,) + tuple(int(e) for e in extent), dtype=tokens.dtype)
    for token, (t0, v0, m0) in zip(tokens, origins):
        out[:, t0:t0 + window.t, v0:v0 + window.v, m0:m0 + window.m] = token.reshape(
            channels, window.t, window.v, window.m
        )
    return out


def positional_encoding(tokens: int, d_model: int, dtype=np.float64) -> np.ndarray:
    """PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same)."""
    if d_model % 2:
        raise ShapeError(f"Positional encoding needs an even width, got {d_model}")
    pos = np.arange(tokens, dtype=np.float64)[:, None]
    rates = np.power(10000.0, np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    pe = np.zeros((tokens, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos / rates)
    pe[:, 1::2] = np.cos(pos / rates)
    return pe.astype(dtype)


class AttentionBlock(Module):
    """
    Multi-head self-attention with scores alpha * tanh(QK^T / sqrt(score_width)) + A.

    Q and K are 1x1x1 projections of x + PE; V is x itself split into H
    channel groups. The block output is relu(z + conv1x1x1(z)) where z is
    the concatenated head output.
    """

    def __init__(
        self,
        channels: int,
        heads: int,
        qkv_channels: int,
        grid: Tuple[int, int, int],
        window: WindowSpec,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        super().__init__()
        if channels % heads:
            raise ConfigurationError(f"Width {channels} is not divisible by {heads} heads")
        self.channels = channels
        self.heads = heads
        self.qkv_channels = qkv_channels
        self.grid = tuple(grid)
        self.tokens = int(np.prod(grid))
        self.score_width = window.volume * qkv_channels

        self.q_proj = Conv3DLayer(channels, heads * qkv_channels, 1, rng=rng, dtype=dtype)
        self.k_proj = Conv3DLayer(channels, heads * qkv_channels, 1, rng=rng, dtype=dtype)
        self.A = Tensor(np.zeros((self.tokens, self.tokens)), requires_grad=True, dtype=dtype)
        self.alpha = Tensor(np.array(ALPHA_INIT), requires_grad=True, dtype=dtype)
        self.ffn = Conv3DLayer(channels, channels, 1, rng=rng, dtype=dtype)

        pe = positional_encoding(self.tokens, channels).T.reshape((1, channels) + self.grid)
        self._positional = Tensor(pe, dtype=dtype)

    def _check(self, x: Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != self.channels:
            raise ShapeError(f"Attention block expects (N, {self.channels}, ...), got {x.shape}")
        if int(np.prod(x.shape[2:])) != self.tokens:
            raise ShapeError(
                f"Input has {int(np.prod(x.shape[2:]))} tokens, A is {self.tokens}x{self.tokens}"
            )

    def attention_scores(self, x: Tensor) -> Tensor:
        """(N, D, *grid) -> (N, H, U, U)"""
        self._check(x)
        n = x.shape[0]
        h, cq, u = self.heads, self.qkv_channels, self.tokens
        xp = ops.add(x, ops.broadcast_to(self._positional, x.shape))
        q = ops.permute(ops.reshape(self.q_proj(xp), (n, h, cq, u)), (0, 1, 3, 2))
        k = ops.reshape(self.k_proj(xp), (n, h, cq, u))
        raw = ops.scale(ops.matmul(q, k), 1.0 / np.sqrt(self.score_width))
        regularized = ops.mul(self.alpha, ops.tanh(raw))
        bias = ops.broadcast_to(ops.reshape(self.A, (1, 1, u, u)), regularized.shape)
        return ops.add(regularized, bias)

    def attend(self, scores: Tensor, x: Tensor) -> Tensor:
        """Mix V = x per head with the scores; heads are concatenated on channels."""
        n, d = x.shape[:2]
        h, u = self.heads, self.tokens
        v = ops.permute(ops.reshape(x, (n, h, d // h, u)), (0, 1, 3, 2))
        mixed = ops.matmul(scores, v)
        return ops.reshape(ops.permute(mixed, (0, 1, 3, 2)), x.shape)

    def feed_forward(self, z: Tensor) -> Tensor:
        return ops.relu(ops.add(z, self.ffn(z)))

    def forward(self, x: Tensor) -> Tensor:
        return self.feed_forward(self.attend(self.attention_scores(x), x))

    def forward_tokens(self, tokens: Tensor) -> Tensor:
        """Token-list form: (U, D) -> (U, D) for a single sample."""
        u, d = tokens.shape
        if u != self.tokens or d != self.channels:
            raise ShapeError(f"Expected ({self.tokens}, {self.channels}) tokens, got {tokens.shape}")
        x = ops.reshape(ops.permute(tokens, (1, 0)), (1, d) + self.grid)
        out = self.forward(x)
        return ops.permute(ops.reshape(out, (d, u)), (1, 0))


def attention_block(x: Tensor, block: AttentionBlock) -> Tensor:
    return block.forward_tokens(x)


def make_temporal_aggregation(channels: int, rng: np.random.Generator, dtype=np.float32) -> Conv3DLayer:
    """Kernel (5, 1, 1), stride 1, time padding 2: keeps every extent."""
    pad = TEMPORAL_KERNEL // 2
    return Conv3DLayer(channels, channels, (TEMPORAL_KERNEL, 1, 1), padding=(pad, 0, 0),
                       rng=rng, dtype=dtype)


def temporal_aggregate(x: Tensor, layer: Conv3DLayer) -> Tensor:
    return layer(x)


class TransformerStream(Module):
    """tokenize -> embed (conv + BN + relu) -> L blocks -> temporal conv -> GAP -> FC"""

    def __init__(self, config, rng: np.random.Generator):
        super().__init__()
        dtype = config.numpy_dtype
        self.window = WindowSpec(*config.window)
        self.grid = self.window.token_grid(config.frames, config.joints, config.entities)
        token_width = 3 * self.window.volume
        d = config.embed_dim

        self.embed = Conv3DLayer(token_width, d, 1, rng=rng, dtype=dtype)
        self.embed_norm = BatchNormLayer(d, dtype=dtype)
        self.blocks: List[AttentionBlock] = [
            AttentionBlock(d, config.transformer_heads, config.qkv_channels,
                           self.grid, self.window, rng, dtype)
            for _ in range(config.transformer_layers)
        ]
        self.temporal = make_temporal_aggregation(d, rng, dtype)
        self.head = LinearLayer(d, config.num_classes, rng=rng, dtype=dtype)
        logger.debug(f"Transformer stream: grid {self.grid}, {len(self.blocks)} blocks, width {d}")

    def embed_tokens(self, x: Tensor) -> Tensor:
        return ops.relu(self.embed_norm(self.embed(tokens_grid(x, self.window))))

    def forward(self, x: Tensor) -> Tensor:
        """(N, 3, T, V, M) -> (N, num_classes) logits."""
        h = self.embed_tokens(x)
        for block in self.blocks:
            h = block(h)
        h = temporal_aggregate(h, self.temporal)
        return self.head(gap(h))


def transformer_forward(x: Tensor, stream: TransformerStream) -> Tensor:
    return stream(x)
