"""
Optimizer Module
SGD with Nesterov momentum and a milestone learning-rate schedule.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one run."""
    lr: float = 0.1
    lr_decay: float = 0.1
    milestones: Tuple[int, ...] = (60, 90)
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 110
    label_smoothing: float = 0.1
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError(
                f"Invalid training settings: lr={self.lr}, batch_size={self.batch_size}, "
                f"epochs={self.epochs}"
            )
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigurationError(f"milestones must be strictly increasing, got {self.milestones}")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """lr0 * decay^(number of milestones <= epoch); epochs count from 0."""
    passed = sum(1 for milestone in cfg.milestones if epoch >= milestone)
    return cfg.lr * cfg.lr_decay ** passed


def sgd_nesterov_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    velocities: Sequence[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """
    In place: v <- mu * v + g; p <- p - lr * (g + mu * v).

    With lr == 0 only the velocities change.
    """
    if not len(params) == len(grads) == len(velocities):
        raise ShapeError(
            f"{len(params)} params, {len(grads)} grads, {len(velocities)} velocity buffers"
        )
    for p, g, v in zip(params, grads, velocities):
        if not p.shape == g.shape == v.shape:
            raise ShapeError(f"Shape mismatch: param {p.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v += g
        if lr != 0:
            p -= lr * (g + momentum * v)


class SGDNesterov:
    """Owns one velocity buffer per named parameter."""

    def __init__(self, named_params: Sequence[Tuple[str, Tensor]], momentum: float = 0.9):
        self.params: List[Tuple[str, Tensor]] = list(named_params)
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {
            name: np.zeros(p.shape, dtype=p.dtype) for name, p in self.params
        }

    def step(self, lr: float) -> None:
        """Apply one update from the current .grad buffers (missing grads count as zero)."""
        datas, grads, vels = [], [], []
        for name, p in self.params:
            datas.append(p.data)
            grads.append(p.grad if p.grad is not None else np.zeros_like(p.data))
            vels.append(self.velocity[name])
        sgd_nesterov_step(datas, grads, vels, lr, self.momentum)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: v.copy() for name, v in self.velocity.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        if set(state) != set(self.velocity):
            raise ShapeError("Velocity buffers do not match the optimizer's parameters")
        for name, value in state.items():
            if value.shape != self.velocity[name].shape:
                raise ShapeError(f"Velocity '{name}' has shape {value.shape}")
            self.velocity[name] = np.array(value, dtype=self.velocity[name].dtype)
