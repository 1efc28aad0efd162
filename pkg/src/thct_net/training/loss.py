"""Label-smoothed cross-entropy."""

from typing import Sequence, Union

import numpy as np

from thct_net.tensor import ops
from thct_net.tensor.core import Tensor


def smoothed_targets(num_classes: int, targets: Union[int, Sequence[int]], smoothing: float) -> np.ndarray:
    """q = (1 - eps) * onehot + eps / K, one row per target."""
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    q = np.full((len(targets), num_classes), smoothing / num_classes)
    q[np.arange(len(targets)), targets] += 1.0 - smoothing
    return q


def target_entropy(num_classes: int, smoothing: float) -> float:
    """Entropy of the smoothed target distribution; the loss never goes below it."""
    q = smoothed_targets(num_classes, 0, smoothing)[0]
    q = q[q > 0]
    return float(-(q * np.log(q)).sum())


def cross_entropy_smoothed(
    logits: Tensor,
    target: Union[int, Sequence[int], np.ndarray],
    smoothing: float = 0.1,
    temperature: float = 1.0,
) -> Tensor:
    """
    -sum_k q_k log softmax(logits / tau)_k, averaged over the batch.

    Raises:
        ConfigurationError: If temperature <= 0 or smoothing outside [0, 1).
        ShapeError: If a target is out of range or K < 2.
    """
    return ops.cross_entropy_smoothed(logits, target, smoothing, temperature)
