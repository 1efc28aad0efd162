"""
Brute-Force Oracles

Direct-summation reference implementations, written with explicit loops
and no shared code with the vectorized kernels they check. Everything is
computed in float64.
"""

import itertools
from typing import Optional, Sequence

import numpy as np

from thct_net.exceptions import ShapeError


def matmul_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched (..., m, k) @ (..., k, n) by triple loop."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"Cannot multiply {a.shape} by {b.shape}")
    m, k = a.shape[-2:]
    n = b.shape[-1]
    out = np.zeros(a.shape[:-2] + (m, n))
    for batch in np.ndindex(*a.shape[:-2]):
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for p in range(k):
                    acc += a[batch + (i, p)] * b[batch + (p, j)]
                out[batch + (i, j)] = acc
    return out


def conv_direct(
    x: np.ndarray,
    weight: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: Sequence[int] = None,
    padding: Sequence[int] = None,
) -> np.ndarray:
    """
    N-d cross-correlation by direct summation.

    x: (N, C_in, *spatial), weight: (C_out, C_in, *kernel).
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    nsp = weight.ndim - 2
    stride = tuple(stride) if stride is not None else (1,) * nsp
    padding = tuple(padding) if padding is not None else (0,) * nsp
    batch, c_in = x.shape[:2]
    c_out = weight.shape[0]
    kernel = weight.shape[2:]
    spatial = x.shape[2:]
    out_spatial = tuple(
        (s + 2 * p - k) // st + 1 for s, k, st, p in zip(spatial, kernel, stride, padding)
    )
    out = np.zeros((batch, c_out) + out_spatial)
    for n, o in itertools.product(range(batch), range(c_out)):
        for pos in np.ndindex(*out_spatial):
            acc = 0.0 if bias is None else float(bias[o])
            for c in range(c_in):
                for offset in np.ndindex(*kernel):
                    src = tuple(
                        q * st + k - p for q, st, k, p in zip(pos, stride, offset, padding)
                    )
                    if all(0 <= s < size for s, size in zip(src, spatial)):
                        acc += x[(n, c) + src] * weight[(o, c) + offset]
            out[(n, o) + pos] = acc
    return out


def attention_block_naive(
    tokens: np.ndarray,
    positional: np.ndarray,
    wq: np.ndarray,
    bq: np.ndarray,
    wk: np.ndarray,
    bk: np.ndarray,
    A: np.ndarray,
    alpha: float,
    w_ffn: np.ndarray,
    b_ffn: np.ndarray,
    heads: int,
    score_width: int,
) -> np.ndarray:
    """
    One attention block on a token list, written out per head and per entry.

    Args:
        tokens: (U, D) token features.
        positional: (U, D) positional encoding added before Q/K projection.
        wq, wk: (H * Cq, D) projection matrices; bq, bk: (H * Cq,).
        A: (U, U) learned bias; alpha: scalar tanh scale.
        w_ffn: (D, D), b_ffn: (D,) per-token feed-forward projection.

    Returns:
        (U, D) = relu(z + z W_ffn^T + b_ffn), z the concatenated head outputs.
    """
    x = np.asarray(tokens, dtype=np.float64)
    u, d = x.shape
    xp = x + positional
    cq = wq.shape[0] // heads
    dh = d // heads
    z = np.zeros((u, d))
    for h in range(heads):
        rows = slice(h * cq, (h + 1) * cq)
        for i in range(u):
            q_i = wq[rows] @ xp[i] + bq[rows]
            for j in range(u):
                k_j = wk[rows] @ xp[j] + bk[rows]
                dot = 0.0
                for c in range(cq):
                    dot += q_i[c] * k_j[c]
                score = alpha * np.tanh(dot / np.sqrt(score_width)) + A[i, j]
                z[i, h * dh:(h + 1) * dh] += score * x[j, h * dh:(h + 1) * dh]
    out = np.zeros((u, d))
    for i in range(u):
        for o in range(d):
            acc = b_ffn[o]
            for c in range(d):
                acc += w_ffn[o, c] * z[i, c]
            out[i, o] = max(z[i, o] + acc, 0.0)
    return out


def gap_naive(x: np.ndarray) -> np.ndarray:
    """(N, C, ...) -> (N, C) by explicit accumulation."""
    x = np.asarray(x, dtype=np.float64)
    n, c = x.shape[:2]
    out = np.zeros((n, c))
    for i in range(n):
        for j in range(c):
            acc = 0.0
            count = 0
            for pos in np.ndindex(*x.shape[2:]):
                acc += x[(i, j) + pos]
                count += 1
            out[i, j] = acc / count
    return out


def motion_difference_loop(coords: np.ndarray) -> np.ndarray:
    """(C, T, V, M): frame t+1 minus frame t, last frame zero."""
    coords = np.asarray(coords, dtype=np.float64)
    out = np.zeros_like(coords)
    for t in range(coords.shape[1] - 1):
        out[:, t] = coords[:, t + 1] - coords[:, t]
    return out
