"""Dense tensors, differentiable ops and gradient checking."""

from thct_net.tensor.core import (
    Tensor,
    TapeNode,
    debug_checks,
    inject_fault,
    is_grad_enabled,
    no_grad,
)
from thct_net.tensor.gradcheck import GradCheckReport, ParameterCheck, grad_check, relative_error

__all__ = [
    "Tensor",
    "TapeNode",
    "debug_checks",
    "inject_fault",
    "is_grad_enabled",
    "no_grad",
    "GradCheckReport",
    "ParameterCheck",
    "grad_check",
    "relative_error",
]
