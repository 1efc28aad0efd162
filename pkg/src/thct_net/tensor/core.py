"""
Tensor Core Module
Dense row-major tensors with a reverse-mode differentiation tape.

Every differentiable op records a TapeNode on its output. Calling
backward() on a scalar walks the tape once in reverse topological order
and accumulates gradients into the leaves that require them.
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from thct_net.exceptions import DTypeMismatchError, GradientError, NumericalError


logger = logging.getLogger(__name__)

# Numeric modes: 32-bit for training, 64-bit for gradient checking
SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
DEFAULT_DTYPE = np.dtype(np.float32)

_local = threading.local()

# op kind -> gradient scale factor, see inject_fault()
_FAULTS: Dict[str, float] = {}


def is_grad_enabled() -> bool:
    """Whether ops record tape nodes on this thread."""
    return getattr(_local, "grad_enabled", True)


def is_debug_enabled() -> bool:
    """Whether op results are checked for NaN/Inf on this thread."""
    return getattr(_local, "debug", False)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape construction on the current thread."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


@contextmanager
def debug_checks() -> Iterator[None]:
    """Raise NumericalError as soon as any op produces a non-finite value."""
    previous = is_debug_enabled()
    _local.debug = True
    try:
        yield
    finally:
        _local.debug = previous


@contextmanager
def inject_fault(op: str, factor: float = 1.5) -> Iterator[None]:
    """
    Corrupt the backward rule of one op kind.

    Every gradient emitted by nodes of kind `op` is multiplied by `factor`
    while the context is active. Used as a negative control for gradient
    checks.
    """
    previous = _FAULTS.get(op)
    _FAULTS[op] = factor
    logger.debug(f"Fault injected into backward rule of '{op}' (factor={factor})")
    try:
        yield
    finally:
        if previous is None:
            _FAULTS.pop(op, None)
        else:
            _FAULTS[op] = previous


def resolve_dtype(dtype) -> np.dtype:
    """Normalize a dtype argument to one of the supported numeric modes."""
    resolved = np.dtype(dtype)
    if resolved not in SUPPORTED_DTYPES:
        raise DTypeMismatchError(
            f"Unsupported dtype {resolved}. Supported: float32, float64"
        )
    return resolved


@dataclass
class TapeNode:
    """One recorded op: its kind, its inputs and the rule mapping output grad to input grads."""
    op: str
    inputs: Tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    N-dimensional dense array with an optional gradient buffer.

    The numeric mode (float32 or float64) is fixed at construction. Data is
    treated as immutable once the tensor takes part in a graph; only the
    grad buffer and, between steps, optimizer-owned parameters change.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        """
        Initialize a tensor from array-like data (always copied).

        Args:
            data: Nested sequence, scalar, ndarray or Tensor.
            requires_grad: Whether backward() should populate .grad.
            dtype: float32 or float64. Defaults to float64 for float64
                   ndarrays/tensors and float32 for everything else.
        """
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype == np.float64:
                dtype = np.float64
            else:
                dtype = DEFAULT_DTYPE
        dtype = resolve_dtype(dtype)
        self.data: np.ndarray = np.array(data, dtype=dtype, copy=True, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[TapeNode] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        """Adopt an op result without copying."""
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data)
        out.requires_grad = requires_grad
        out.grad = None
        out._node = None
        return out

    # ------------------------------------------------------------------
    # Shape information
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        """True for tensors not produced by a recorded op."""
        return self._node is None

    @property
    def op(self) -> Optional[str]:
        return self._node.op if self._node is not None else None

    def numpy(self) -> np.ndarray:
        """Return a copy of the data."""
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise GradientError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same data, no tape, no grad requirement."""
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        op = f", op={self.op}" if self.op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag}{op})"

    def __len__(self) -> int:
        return self.shape[0] if self.ndim else 1

    # ------------------------------------------------------------------
    # Operator sugar (delegates to ops)
    # ------------------------------------------------------------------

    def __add__(self, other):
        from thct_net.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from thct_net.tensor import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from thct_net.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from thct_net.tensor import ops
        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from thct_net.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from thct_net.tensor import ops
        return ops.mul(self, other)

    def __truediv__(self, other):
        from thct_net.tensor import ops
        if isinstance(other, Tensor):
            raise TypeError("Tensor division is only defined by a Python scalar")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from thct_net.tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from thct_net.tensor import ops
        return ops.matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        from thct_net.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def permute(self, *order) -> "Tensor":
        from thct_net.tensor import ops
        if len(order) == 1 and isinstance(order[0], (tuple, list)):
            order = tuple(order[0])
        return ops.permute(self, order)

    def sum(self, axis=None) -> "Tensor":
        from thct_net.tensor import ops
        return ops.sum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        from thct_net.tensor import ops
        return ops.mean(self, axis)

    # ------------------------------------------------------------------
    # Reverse-mode differentiation
    # ------------------------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self) -> None:
        """
        Populate .grad of every requires_grad leaf reachable from this scalar.

        Repeated calls without zero_grad() accumulate.

        Raises:
            GradientError: If the tensor is not a scalar or not connected to a tape.
        """
        if self.size != 1:
            raise GradientError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        if not self.requires_grad:
            raise GradientError(
                "Loss is not connected to any tensor that requires grad"
            )

        order = _topological_order(self)
        pending: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for tensor in reversed(order):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor._node
            if node is None:
                tensor._accumulate(grad)
                continue

            input_grads = node.backward(grad)
            factor = _FAULTS.get(node.op)
            for inp, inp_grad in zip(node.inputs, input_grads):
                if inp_grad is None or not inp.requires_grad:
                    continue
                if factor is not None:
                    inp_grad = inp_grad * factor
                if inp_grad.shape != inp.shape:
                    raise GradientError(
                        f"Backward rule of '{node.op}' returned shape {inp_grad.shape} "
                        f"for an input of shape {inp.shape}"
                    )
                key = id(inp)
                if key in pending:
                    pending[key] = pending[key] + inp_grad
                else:
                    pending[key] = inp_grad


def _topological_order(root: Tensor) -> List[Tensor]:
    """Inputs-before-outputs order of every grad-requiring tensor under root."""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor._node is not None:
            for inp in tensor._node.inputs:
                if inp.requires_grad and id(inp) not in visited:
                    stack.append((inp, False))
    return order


def make_result(
    data: np.ndarray,
    op: str,
    inputs: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result and record it on the tape when any input needs grad."""
    if is_debug_enabled() and not np.isfinite(data).all():
        raise NumericalError(f"'{op}' produced non-finite values")
    requires = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    if requires:
        out._node = TapeNode(op=op, inputs=tuple(inputs), backward=backward)
    return out


def as_tensor(value, dtype=None) -> Tensor:
    """Return value unchanged if it is a Tensor, else a constant tensor."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def check_same_dtype(*tensors: Tensor) -> np.dtype:
    """All operands must share one numeric mode."""
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) != 1:
        raise DTypeMismatchError(
            f"Operands mix numeric modes: {sorted(str(d) for d in dtypes)}"
        )
    return tensors[0].dtype
