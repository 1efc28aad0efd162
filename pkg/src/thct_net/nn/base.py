"""
Module Base Class
Parameter and buffer bookkeeping shared by every layer and model.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from thct_net.exceptions import CheckpointMismatchError
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)


class Module(ABC):
    """
    Base class for layers and models.

    Parameters are Tensor attributes with requires_grad=True; sub-layers are
    Module attributes or lists of Modules. Both are discovered in attribute
    definition order, which fixes parameter naming and checkpoint layout.
    Non-trainable state (BatchNorm running statistics) lives in _buffers.
    """

    def __init__(self):
        self.training = True
        self._buffers: Dict[str, np.ndarray] = {}

    @abstractmethod
    def forward(self, *args, **kwargs):
        pass

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield f"{name}.{i}", item
            else:
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in self._children():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def _buffer_slots(self, prefix: str = "") -> Iterator[Tuple[str, "Module", str]]:
        for key in self._buffers:
            yield prefix + key, self, key
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value._buffer_slots(f"{prefix}{name}.")

    def named_buffers(self) -> Iterator[Tuple[str, np.ndarray]]:
        for full_name, module, key in self._buffer_slots():
            yield full_name, module._buffers[key]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, param in self.named_parameters():
            param.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copies of all parameters followed by all buffers, in discovery order."""
        state = {name: param.data.copy() for name, param in self.named_parameters()}
        for name, buf in self.named_buffers():
            state[name] = buf.copy()
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """
        Restore parameters and buffers in place.

        Raises:
            CheckpointMismatchError: On missing/unexpected names or shape mismatch.
        """
        params = dict(self.named_parameters())
        slots = {name: (module, key) for name, module, key in self._buffer_slots()}
        expected = set(params) | set(slots)
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise CheckpointMismatchError(
                f"State does not fit model: missing {missing[:5]}, unexpected {unexpected[:5]}"
            )

        for name, param in params.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointMismatchError(
                    f"'{name}' has shape {value.shape}, model expects {param.shape}"
                )
            param.data[...] = value.astype(param.dtype)
        for name, (module, key) in slots.items():
            value = np.asarray(state[name])
            current = module._buffers[key]
            if value.shape != current.shape:
                raise CheckpointMismatchError(
                    f"Buffer '{name}' has shape {value.shape}, model expects {current.shape}"
                )
            module._buffers[key] = value.astype(current.dtype).copy()
        logger.debug(f"Loaded {len(params)} parameters and {len(slots)} buffers")
