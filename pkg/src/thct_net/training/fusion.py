"""
Late Fusion
Weighted combination of the two streams' class scores.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.tensor.ops import softmax_probabilities

# w = 0, 0.1, ..., 1.0
SWEEP_WEIGHTS: Tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))

VALID_SPACES = ("logit", "probability")


@dataclass(frozen=True)
class FusionConfig:
    """w weighs the Transformer scores, 1 - w the CNN scores."""
    weight: float = 0.5
    space: str = "logit"

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigurationError(f"Fusion weight must lie in [0, 1], got {self.weight}")
        if self.space not in VALID_SPACES:
            raise ConfigurationError(f"Fusion space must be one of {VALID_SPACES}, got '{self.space}'")


def late_fuse(scores_t: np.ndarray, scores_c: np.ndarray, cfg: FusionConfig) -> np.ndarray:
    """
    w * s_T + (1 - w) * s_C in logit or probability space.

    w = 1 and w = 0 return the respective stream's scores unchanged.
    """
    scores_t = np.asarray(scores_t)
    scores_c = np.asarray(scores_c)
    if scores_t.shape != scores_c.shape:
        raise ShapeError(f"Score shapes differ: {scores_t.shape} vs {scores_c.shape}")
    if cfg.space == "probability":
        scores_t = softmax_probabilities(scores_t)
        scores_c = softmax_probabilities(scores_c)
    if cfg.weight == 1.0:
        return scores_t.copy()
    if cfg.weight == 0.0:
        return scores_c.copy()
    return cfg.weight * scores_t + (1.0 - cfg.weight) * scores_c


def fusion_sweep(
    scores_t: np.ndarray,
    scores_c: np.ndarray,
    labels: np.ndarray,
    space: str = "logit",
    weights: Sequence[float] = SWEEP_WEIGHTS,
) -> List[Tuple[float, float]]:
    """(w, top-1 accuracy) for each weight."""
    labels = np.asarray(labels)
    rows = []
    for w in weights:
        fused = late_fuse(scores_t, scores_c, FusionConfig(weight=w, space=space))
        rows.append((float(w), float(np.mean(fused.argmax(axis=-1) == labels))))
    return rows
