"""
Gradient Check Module
Compares tape gradients against central finite differences.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from thct_net.exceptions import NonDeterministicFunctionError
from thct_net.tensor.core import Tensor, no_grad


logger = logging.getLogger(__name__)

# Denominator floor for the relative error of near-zero gradients
RELATIVE_FLOOR = 1e-6

# Step divisors tried when an entry fails at the base step
RETRY_DIVISORS = (10.0, 100.0)

ParamSource = Union[Mapping[str, Tensor], Sequence[Tuple[str, Tensor]]]


def relative_error(analytic: float, numeric: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-6)"""
    denom = max(abs(analytic), abs(numeric), RELATIVE_FLOOR)
    return abs(analytic - numeric) / denom


@dataclass
class ParameterCheck:
    """Result for one parameter tensor."""
    name: str
    max_relative_error: float
    checked_entries: int
    total_entries: int
    worst_index: Tuple[int, ...] = ()
    analytic: float = 0.0
    numeric: float = 0.0


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative errors against a tolerance."""
    tolerance: float
    step: float
    checks: List[ParameterCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.max_relative_error < self.tolerance for c in self.checks)

    @property
    def max_relative_error(self) -> float:
        return max((c.max_relative_error for c in self.checks), default=0.0)

    def failures(self) -> List[ParameterCheck]:
        return [c for c in self.checks if c.max_relative_error >= self.tolerance]

    def __getitem__(self, name: str) -> ParameterCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


def _evaluate(f: Callable[[], Tensor]) -> float:
    with no_grad():
        return f().item()


def _central(f, param: Tensor, index, step: float) -> float:
    original = param.data[index]
    try:
        param.data[index] = original + step
        plus = _evaluate(f)
        param.data[index] = original - step
        minus = _evaluate(f)
    finally:
        param.data[index] = original
    return (plus - minus) / (2.0 * step)


def _numeric_derivative(f, param: Tensor, index, step: float) -> float:
    """Central difference at (step, step/2) combined by Richardson extrapolation."""
    coarse = _central(f, param, index, step)
    fine = _central(f, param, index, step / 2.0)
    return (4.0 * fine - coarse) / 3.0


def grad_check(
    f: Callable[[], Tensor],
    params: ParamSource,
    h: float = 1e-3,
    tol: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Check analytic gradients of a scalar function against finite differences.

    Args:
        f: Zero-argument callable building the scalar loss from params.
        params: Named leaf tensors (requires_grad) to perturb.
        h: Base finite-difference step.
        tol: Pass threshold on the relative error.
        max_entries: Check at most this many seeded entries per tensor.
        seed: Seed for entry sampling.

    Returns:
        GradCheckReport with one ParameterCheck per tensor.

    Raises:
        NonDeterministicFunctionError: If two evaluations of f differ.
    """
    named = list(params.items()) if isinstance(params, Mapping) else list(params)

    first, second = _evaluate(f), _evaluate(f)
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise NonDeterministicFunctionError(
            f"Function returned {first!r} then {second!r} for identical inputs"
        )

    report = GradCheckReport(tolerance=tol, step=h)
    if not named:
        return report

    for name, param in named:
        if param.dtype != np.float64:
            logger.warning(f"Gradient check of '{name}' in {param.dtype}; results need float64")
        param.zero_grad()
    f().backward()
    analytic = {
        name: (param.grad.copy() if param.grad is not None else np.zeros(param.shape, dtype=param.dtype))
        for name, param in named
    }
    for _, param in named:
        param.zero_grad()

    rng = np.random.default_rng(seed)
    for name, param in named:
        total = param.size
        if max_entries is not None and total > max_entries:
            flat = np.sort(rng.choice(total, size=max_entries, replace=False))
        else:
            flat = np.arange(total)

        check = ParameterCheck(name=name, max_relative_error=0.0,
                               checked_entries=len(flat), total_entries=total)
        for position in flat:
            index = np.unravel_index(int(position), param.shape)
            a = float(analytic[name][index])
            n = _numeric_derivative(f, param, index, h)
            err = relative_error(a, n)
            if err >= tol:
                for divisor in RETRY_DIVISORS:
                    retry_n = _numeric_derivative(f, param, index, h / divisor)
                    retry_err = relative_error(a, retry_n)
                    logger.debug(
                        f"{name}{tuple(int(i) for i in index)}: err {err:.3e} at h, "
                        f"{retry_err:.3e} at h/{divisor:g}"
                    )
                    if retry_err < err:
                        err, n = retry_err, retry_n
                    if err < tol:
                        break
            if err > check.max_relative_error or check.worst_index == ():
                check.max_relative_error = err
                check.worst_index = tuple(int(i) for i in index)
                check.analytic = a
                check.numeric = n
        report.checks.append(check)
        logger.debug(f"grad_check {name}: max rel err {check.max_relative_error:.3e} "
                     f"over {check.checked_entries}/{total} entries")

    return report
