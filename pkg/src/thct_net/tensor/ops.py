"""
Tensor Ops Module
Differentiable kernels built on the tape in core.

Broadcasting is limited to scalar-against-tensor. Layer code reshapes and
calls broadcast_to explicitly whenever it needs anything else.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import log_softmax, softmax

from thct_net.exceptions import (
    BroadcastError,
    ConfigurationError,
    DegenerateBatchError,
    InvalidPermutationError,
    ShapeError,
)
from thct_net.tensor.core import Tensor, check_same_dtype, make_result


logger = logging.getLogger(__name__)

Scalar = Union[int, float]
Operand = Union[Tensor, Scalar]

# Op kinds that can be targeted by inject_fault()
OP_KINDS = (
    "add", "sub", "mul", "scale", "tanh", "relu", "matmul", "permute",
    "reshape", "concat", "slice", "broadcast", "sum", "mean", "conv",
    "batch_norm", "linear", "cross_entropy",
)


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"Axis {axis} out of range for rank {ndim}")
    return axis % ndim


def _binary_pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("At least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a), dtype=b.dtype)
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b), dtype=a.dtype)
    check_same_dtype(a, b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise BroadcastError(
            f"Cannot combine shapes {a.shape} and {b.shape}: "
            f"operands must match or one must be a scalar"
        )
    return a, b


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Undo scalar broadcasting in a backward rule."""
    if grad.shape == shape:
        return grad
    if grad.size == int(np.prod(shape)):
        return grad.reshape(shape)
    return np.asarray(grad.sum()).reshape(shape)


def _out_shape(a: Tensor, b: Tensor) -> Tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    return b.shape if a.size == 1 else a.shape


# ----------------------------------------------------------------------
# Elementwise
# ----------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_pair(a, b)
    data = a.data + b.data
    if data.shape != _out_shape(a, b):
        data = data.reshape(_out_shape(a, b))
    return make_result(
        data, "add", (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)),
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_pair(a, b)
    data = a.data - b.data
    if data.shape != _out_shape(a, b):
        data = data.reshape(_out_shape(a, b))
    return make_result(
        data, "sub", (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)),
    )


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _binary_pair(a, b)
    data = a.data * b.data
    if data.shape != _out_shape(a, b):
        data = data.reshape(_out_shape(a, b))

    def backward(g):
        return (
            _reduce_to(g * b.data, a.shape),
            _reduce_to(g * a.data, b.shape),
        )

    return make_result(data, "mul", (a, b), backward)


def scale(t: Tensor, factor: Scalar) -> Tensor:
    """Multiply by a constant Python scalar."""
    c = t.dtype.type(factor)
    return make_result(t.data * c, "scale", (t,), lambda g: (g * c,))


def neg(t: Tensor) -> Tensor:
    return scale(t, -1.0)


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)
    return make_result(y, "tanh", (t,), lambda g: (g * (1.0 - y * y),))


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    y = np.where(mask, t.data, t.dtype.type(0))
    return make_result(y, "relu", (t,), lambda g: (g * mask,))


def elementwise(t: Tensor, kind: str, other: Optional[Operand] = None) -> Tensor:
    """
    Dispatch one of the elementwise kinds by name.

    Unary kinds: tanh, relu. Binary kinds: add, mul (other is a tensor or
    scalar). scale takes a Python scalar as other.
    """
    if kind == "tanh":
        return tanh(t)
    if kind == "relu":
        return relu(t)
    if other is None:
        raise ShapeError(f"Elementwise '{kind}' needs a second operand")
    if kind == "add":
        return add(t, other)
    if kind == "mul":
        return mul(t, other)
    if kind == "scale":
        return scale(t, float(other))
    raise ConfigurationError(f"Unknown elementwise kind '{kind}'")


# ----------------------------------------------------------------------
# Shape algebra
# ----------------------------------------------------------------------

def inverse_permutation(order: Sequence[int]) -> Tuple[int, ...]:
    return tuple(int(i) for i in np.argsort(np.asarray(order)))


def permute(t: Tensor, order: Sequence[int]) -> Tensor:
    """Reorder axes; output axis k is input axis order[k]. Data is materialized."""
    order = tuple(int(axis) for axis in order)
    if len(order) != t.ndim or sorted(order) != list(range(t.ndim)):
        raise InvalidPermutationError(
            f"Order {order} is not a permutation of the {t.ndim} axes"
        )
    inverse = inverse_permutation(order)
    data = np.ascontiguousarray(np.transpose(t.data, order))
    return make_result(
        data, "permute", (t,),
        lambda g: (np.ascontiguousarray(np.transpose(g, inverse)),),
    )


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if -1 in shape:
        known = int(np.prod([s for s in shape if s != -1]))
        if shape.count(-1) > 1 or known == 0 or t.size % known:
            raise ShapeError(f"Cannot reshape {t.shape} to {shape}")
        shape = tuple(t.size // known if s == -1 else s for s in shape)
    if int(np.prod(shape)) != t.size:
        raise ShapeError(f"Cannot reshape {t.shape} ({t.size} elements) to {shape}")
    original = t.shape
    return make_result(
        t.data.reshape(shape), "reshape", (t,),
        lambda g: (g.reshape(original),),
    )


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along one axis; every other extent must agree."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one part")
    if len(parts) == 1:
        return parts[0]
    check_same_dtype(*parts)
    ndim = parts[0].ndim
    axis = _normalize_axis(axis, ndim)
    reference = parts[0].shape[:axis] + parts[0].shape[axis + 1:]
    for part in parts[1:]:
        if part.ndim != ndim or part.shape[:axis] + part.shape[axis + 1:] != reference:
            raise ShapeError(
                f"concat on axis {axis}: shape {part.shape} does not match {parts[0].shape}"
            )
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    data = np.concatenate([p.data for p in parts], axis=axis)
    return make_result(
        data, "concat", tuple(parts),
        lambda g: tuple(np.ascontiguousarray(x) for x in np.split(g, bounds, axis=axis)),
    )


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous range [start, stop) along one axis."""
    axis = _normalize_axis(axis, t.ndim)
    if not 0 <= start < stop <= t.shape[axis]:
        raise ShapeError(
            f"Slice [{start}, {stop}) out of range for axis {axis} of extent {t.shape[axis]}"
        )
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros(t.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return make_result(t.data[index].copy(), "slice", (t,), backward)


def split(t: Tensor, sizes: Sequence[int], axis: int = 0) -> List[Tensor]:
    """Inverse of concat for the given part extents."""
    axis = _normalize_axis(axis, t.ndim)
    if int(np.sum(sizes)) != t.shape[axis] or any(s <= 0 for s in sizes):
        raise ShapeError(f"Split sizes {list(sizes)} do not cover extent {t.shape[axis]}")
    parts, start = [], 0
    for size in sizes:
        parts.append(slice_axis(t, axis, start, start + size))
        start += size
    return parts


def broadcast_to(t: Tensor, shape: Sequence[int]) -> Tensor:
    """Repeat size-1 axes to the target shape (ranks must already agree)."""
    shape = tuple(int(s) for s in shape)
    if len(shape) != t.ndim or any(
        src != dst and src != 1 for src, dst in zip(t.shape, shape)
    ):
        raise BroadcastError(f"Cannot broadcast {t.shape} to {shape}")
    axes = tuple(i for i, (src, dst) in enumerate(zip(t.shape, shape)) if src == 1 and dst != 1)
    data = np.broadcast_to(t.data, shape).copy()
    return make_result(
        data, "broadcast", (t,),
        lambda g: (g.sum(axis=axes, keepdims=True) if axes else g,),
    )


# ----------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------

def _reduction_axes(t: Tensor, axis) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(t.ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(_normalize_axis(a, t.ndim) for a in axis))


def sum(t: Tensor, axis=None) -> Tensor:  # noqa: A001
    """Sum over the given axes (all by default); reduced axes are removed."""
    axes = _reduction_axes(t, axis)
    data = t.data.sum(axis=axes)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axes), t.shape).copy(),)

    return make_result(np.asarray(data), "sum", (t,), backward)


def mean(t: Tensor, axis=None) -> Tensor:
    axes = _reduction_axes(t, axis)
    count = int(np.prod([t.shape[a] for a in axes])) if axes else 1
    data = t.data.mean(axis=axes)
    inv = t.dtype.type(1.0 / count)

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, axes) * inv, t.shape).copy(),)

    return make_result(np.asarray(data, dtype=t.dtype), "mean", (t,), backward)


def avg_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping k×k average over the last two axes; remainders are cropped."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool2d expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    oh, ow = h // kernel, w // kernel
    if oh < 1 or ow < 1:
        raise ShapeError(f"Pooling kernel {kernel} larger than plane {h}x{w}")
    if oh * kernel != h:
        x = slice_axis(x, 2, 0, oh * kernel)
    if ow * kernel != w:
        x = slice_axis(x, 3, 0, ow * kernel)
    blocks = reshape(x, (n, c, oh, kernel, ow, kernel))
    return mean(blocks, axis=(3, 5))


# ----------------------------------------------------------------------
# Linear algebra
# ----------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    Both operands must have the same rank and identical leading (batch)
    extents.
    """
    check_same_dtype(a, b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul needs equal-rank operands with matching batch axes, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return make_result(data, "matmul", (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias over the trailing axis of x."""
    inputs = (x, weight) if bias is None else (x, weight, bias)
    check_same_dtype(*inputs)
    out_features, in_features = weight.shape
    if x.shape[-1] != in_features:
        raise ShapeError(f"linear expects {in_features} input features, got shape {x.shape}")
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data

    def backward(g):
        g2 = g.reshape(-1, out_features)
        x2 = x.data.reshape(-1, in_features)
        grads = [(g @ weight.data).reshape(x.shape), g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(data, "linear", inputs, backward)


def _as_tuple(value, n: int, name: str) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{name} needs {n} entries, got {value}")
    return value


def conv_output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv_nd(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: Union[int, Sequence[int]] = 1,
    padding: Union[int, Sequence[int]] = 0,
) -> Tensor:
    """
    Cross-correlation over N spatial axes via im2col and one tensordot.

    Args:
        x: (N, C_in, *spatial)
        weight: (C_out, C_in, *kernel)
        bias: (C_out,) or None
        stride, padding: int or one entry per spatial axis (zero padding)
    """
    inputs = (x, weight) if bias is None else (x, weight, bias)
    check_same_dtype(*inputs)
    nsp = weight.ndim - 2
    if x.ndim != nsp + 2:
        raise ShapeError(f"conv input rank {x.ndim} does not match kernel rank {weight.ndim}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv channel mismatch: input has {x.shape[1]}, kernel expects {weight.shape[1]}"
        )
    stride = _as_tuple(stride, nsp, "stride")
    padding = _as_tuple(padding, nsp, "padding")
    kernel = weight.shape[2:]
    spatial = x.shape[2:]
    out_spatial = tuple(
        conv_output_extent(s, k, st, p) for s, k, st, p in zip(spatial, kernel, stride, padding)
    )
    if any(o < 1 for o in out_spatial):
        raise ShapeError(
            f"Kernel {kernel} larger than padded input {spatial} (padding {padding})"
        )

    sp_axes = tuple(range(2, 2 + nsp))
    pad_width = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    padded = np.pad(x.data, pad_width) if any(padding) else x.data
    # windows: (N, C, *out_full, *kernel) -> strided -> (N, C, *out, *kernel)
    windows = sliding_window_view(padded, kernel, axis=sp_axes)
    strided_index = (slice(None), slice(None)) + tuple(
        slice(None, None, st) for st in stride
    )
    windows = windows[strided_index]
    windows = windows[(slice(None), slice(None)) + tuple(slice(0, o) for o in out_spatial)]

    k_axes = tuple(range(2 + nsp, 2 + 2 * nsp))
    # contract C and kernel axes: result (N, *out, C_out)
    out = np.tensordot(windows, weight.data, axes=((1,) + k_axes, (1,) + tuple(range(2, 2 + nsp))))
    out = np.moveaxis(out, -1, 1)
    if bias is not None:
        out = out + bias.data.reshape((1, -1) + (1,) * nsp)
    out = np.ascontiguousarray(out)

    def backward(g):
        # g: (N, C_out, *out)
        grad_w = np.tensordot(
            g, windows, axes=((0,) + sp_axes, (0,) + sp_axes)
        )  # (C_out, C_in, *kernel)
        # contributions per output position: (N, *out, C_in, *kernel)
        cols = np.tensordot(g, weight.data, axes=([1], [0]))
        cols = np.moveaxis(cols, 1 + nsp, 1)  # (N, C_in, *out, *kernel)
        grad_padded = np.zeros(padded.shape, dtype=g.dtype)
        for offset in np.ndindex(*kernel):
            target = (slice(None), slice(None)) + tuple(
                slice(o, o + st * (n - 1) + 1, st)
                for o, st, n in zip(offset, stride, out_spatial)
            )
            grad_padded[target] += cols[(Ellipsis,) + offset]
        crop = (slice(None), slice(None)) + tuple(
            slice(p, p + s) for p, s in zip(padding, spatial)
        )
        grads = [np.ascontiguousarray(grad_padded[crop]), grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0,) + sp_axes))
        return tuple(grads)

    return make_result(out, "conv", inputs, backward)


# ----------------------------------------------------------------------
# Normalization and loss
# ----------------------------------------------------------------------

def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    eps: float = 1e-5,
    running: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """
    Per-channel normalization over every axis except axis 1.

    With running=None the batch statistics are used (train mode) and the
    biased batch variance is returned alongside. With running=(mean, var)
    those statistics are applied as constants (eval mode).

    Returns:
        (output, mean, var) where mean/var are the statistics used.
    """
    check_same_dtype(x, gamma, beta)
    if x.ndim < 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm: input {x.shape} does not match {gamma.shape[0]} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    count = x.size // x.shape[1]

    if running is None:
        if x.shape[0] < 2:
            raise DegenerateBatchError(
                f"Batch statistics need at least 2 samples, got batch of {x.shape[0]}"
            )
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
    else:
        mu = np.asarray(running[0], dtype=x.dtype)
        var = np.asarray(running[1], dtype=x.dtype)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = x_hat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        g_hat = g * gamma.data.reshape(bshape)
        if running is None:
            mean_g = g_hat.mean(axis=axes, keepdims=True)
            mean_gx = (g_hat * x_hat).mean(axis=axes, keepdims=True)
            grad_x = (g_hat - mean_g - x_hat * mean_gx) * inv_std.reshape(bshape)
        else:
            grad_x = g_hat * inv_std.reshape(bshape)
        return (grad_x, grad_gamma, grad_beta)

    logger.debug(f"batch_norm over {count} values per channel (train={running is None})")
    return make_result(out, "batch_norm", (x, gamma, beta), backward), mu, var


def cross_entropy_smoothed(
    logits: Tensor,
    targets: Union[int, Sequence[int], np.ndarray],
    smoothing: float = 0.1,
    temperature: float = 1.0,
) -> Tensor:
    """
    Label-smoothed cross-entropy with softmax temperature.

    logits is (K,) for one sample or (N, K) for a batch; the batched loss
    is the mean over samples.
    """
    if temperature <= 0:
        raise ConfigurationError(f"Temperature must be positive, got {temperature}")
    if not 0.0 <= smoothing < 1.0:
        raise ConfigurationError(f"Label smoothing must lie in [0, 1), got {smoothing}")
    single = logits.ndim == 1
    z = logits.data.reshape(1, -1) if single else logits.data
    if z.ndim != 2:
        raise ShapeError(f"cross_entropy expects (K,) or (N, K) logits, got {logits.shape}")
    n, k = z.shape
    if k < 2:
        raise ShapeError(f"cross_entropy needs at least 2 classes, got {k}")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if targets.shape != (n,) or targets.min() < 0 or targets.max() >= k:
        raise ShapeError(f"Targets {targets.tolist()} do not fit {n} samples of {k} classes")

    q = np.full((n, k), smoothing / k, dtype=logits.dtype)
    q[np.arange(n), targets] += 1.0 - smoothing
    log_p = log_softmax(z / temperature, axis=1).astype(logits.dtype)
    loss = -(q * log_p).sum() / n

    def backward(g):
        p = np.exp(log_p)
        grad = g * (p - q) / (n * temperature)
        return (grad.reshape(logits.shape).astype(logits.dtype),)

    return make_result(np.asarray(loss, dtype=logits.dtype), "cross_entropy", (logits,), backward)


def softmax_probabilities(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of raw scores (no tape)."""
    return softmax(np.asarray(logits) / temperature, axis=-1)

