"""
Tests for grad_check - finite-difference verification of tape gradients.
"""

import numpy as np
import pytest

from thct_net.exceptions import NonDeterministicFunctionError
from thct_net.tensor import Tensor, grad_check, inject_fault, relative_error
from thct_net.tensor import ops


@pytest.fixture
def params(rng):
    return {
        "w": Tensor(rng.standard_normal((3, 4)), requires_grad=True),
        "x": Tensor(rng.standard_normal((4, 2)), requires_grad=True),
    }


def tanh_matmul_loss(params):
    return lambda: ops.sum(ops.tanh(params["w"] @ params["x"]))


class TestRelativeError:
    """Tests for the relative error measure."""

    def test_identical_values(self):
        """Test that equal values give zero error."""
        assert relative_error(0.5, 0.5) == 0.0

    def test_floor_for_tiny_values(self):
        """Test the 1e-6 denominator floor near zero."""
        assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)

    def test_symmetric(self):
        """Test the measure is symmetric in its arguments."""
        assert relative_error(1.0, 1.1) == relative_error(1.1, 1.0)


class TestGradCheck:
    """Tests for grad_check."""

    def test_correct_gradients_pass(self, params):
        """Test that exact backward rules pass at 1e-4."""
        report = grad_check(tanh_matmul_loss(params), params, h=1e-3, tol=1e-4)
        assert report.passed
        assert report.max_relative_error < 1e-6
        assert [c.name for c in report.checks] == ["w", "x"]

    def test_all_entries_checked_by_default(self, params):
        """Test that every entry is visited without max_entries."""
        report = grad_check(tanh_matmul_loss(params), params)
        assert report["w"].checked_entries == 12
        assert report["x"].checked_entries == 8

    def test_max_entries_samples(self, params):
        """Test that max_entries caps the entries checked per tensor."""
        report = grad_check(tanh_matmul_loss(params), params, max_entries=3)
        assert report["w"].checked_entries == 3
        assert report["w"].total_entries == 12

    def test_fault_is_detected(self, params):
        """Test that a corrupted backward rule fails the check."""
        with inject_fault("tanh", factor=1.5):
            report = grad_check(tanh_matmul_loss(params), params)
        assert not report.passed
        assert {c.name for c in report.failures()} == {"w", "x"}
        worst = report["w"]
        assert worst.analytic == pytest.approx(1.5 * worst.numeric, rel=1e-4)

    def test_parameters_restored(self, params):
        """Test that perturbed entries are put back exactly."""
        before = {name: p.data.copy() for name, p in params.items()}
        grad_check(tanh_matmul_loss(params), params)
        for name, p in params.items():
            np.testing.assert_array_equal(p.data, before[name])

    def test_grads_cleared_after_check(self, params):
        """Test that grad buffers are left empty."""
        grad_check(tanh_matmul_loss(params), params)
        assert all(p.grad is None for p in params.values())

    def test_accepts_named_pairs(self, params):
        """Test a sequence of (name, tensor) pairs."""
        report = grad_check(tanh_matmul_loss(params), list(params.items()))
        assert report.passed

    def test_unused_parameter_has_zero_gradient(self, params, rng):
        """Test that a parameter outside the graph checks as zero."""
        unused = Tensor(rng.standard_normal(2), requires_grad=True)
        report = grad_check(tanh_matmul_loss(params), {**params, "unused": unused})
        assert report["unused"].max_relative_error == 0.0

    def test_non_deterministic_function_raises(self, params):
        """Test that a function returning different values is refused."""
        noise = np.random.default_rng(0)

        def f():
            return ops.sum(params["w"]) + float(noise.standard_normal())

        with pytest.raises(NonDeterministicFunctionError):
            grad_check(f, params)

    def test_unknown_name_raises_key_error(self, params):
        """Test report lookup by an unknown name."""
        report = grad_check(tanh_matmul_loss(params), params)
        with pytest.raises(KeyError):
            report["missing"]
