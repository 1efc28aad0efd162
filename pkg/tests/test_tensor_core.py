"""
Tests for the tensor core - construction, tape and differentiable ops.
"""

import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thct_net.exceptions import (
    BroadcastError,
    ConfigurationError,
    DegenerateBatchError,
    DTypeMismatchError,
    GradientError,
    InvalidPermutationError,
    NumericalError,
    ShapeError,
)
from thct_net.oracles import conv_direct, matmul_naive
from thct_net.tensor import Tensor, debug_checks, inject_fault, is_grad_enabled, no_grad
from thct_net.tensor import ops


def leaf(shape, rng, dtype=np.float64):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=dtype)


class TestTensorConstruction:
    """Tests for Tensor initialization."""

    def test_list_defaults_to_float32(self):
        """Test that nested lists become float32 tensors."""
        t = Tensor([[1, 2], [3, 4]])
        assert t.dtype == np.float32
        assert t.shape == (2, 2)

    def test_float64_array_keeps_mode(self):
        """Test that float64 ndarrays stay float64."""
        t = Tensor(np.zeros((3,), dtype=np.float64))
        assert t.dtype == np.float64

    def test_data_is_copied(self):
        """Test that later writes to the source array do not leak in."""
        source = np.ones((2, 3))
        t = Tensor(source)
        source[0, 0] = 42.0
        assert t.data[0, 0] == 1.0

    def test_unsupported_dtype_rejected(self):
        """Test that integer modes are refused."""
        with pytest.raises(DTypeMismatchError):
            Tensor([1, 2], dtype=np.int32)

    def test_item_requires_single_element(self):
        """Test that item() on a vector raises GradientError."""
        with pytest.raises(GradientError):
            Tensor([1.0, 2.0]).item()

    def test_detach_drops_requirement(self, rng):
        """Test that detach() gives a constant tensor."""
        t = leaf((2,), rng)
        d = t.detach()
        assert not d.requires_grad
        assert d.is_leaf
        np.testing.assert_array_equal(d.data, t.data)


class TestBackward:
    """Tests for reverse-mode accumulation."""

    def test_add_gradient_is_ones(self, rng):
        """Test d(sum(a + b))/da = 1."""
        a, b = leaf((2, 3), rng), leaf((2, 3), rng)
        ops.sum(a + b).backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.ones((2, 3)))

    def test_mul_gradient_is_other_operand(self, rng):
        """Test d(sum(a * b))/da = b."""
        a, b = leaf((4,), rng), leaf((4,), rng)
        ops.sum(a * b).backward()
        np.testing.assert_allclose(a.grad, b.data)
        np.testing.assert_allclose(b.grad, a.data)

    def test_shared_subexpression_accumulates(self, rng):
        """Test that a tensor used twice receives both contributions."""
        x = leaf((5,), rng)
        ops.sum(x * x + x).backward()
        np.testing.assert_allclose(x.grad, 2.0 * x.data + 1.0)

    def test_matmul_gradient_formula(self, rng):
        """Test matmul backward against the closed-form products."""
        a, b = leaf((3, 4), rng), leaf((4, 2), rng)
        ops.sum(a @ b).backward()
        g = np.ones((3, 2))
        np.testing.assert_allclose(a.grad, g @ b.data.T)
        np.testing.assert_allclose(b.grad, a.data.T @ g)

    def test_repeated_backward_accumulates(self, rng):
        """Test that two backward passes without zero_grad add up."""
        x = leaf((3,), rng)
        ops.sum(ops.scale(x, 2.0)).backward()
        ops.sum(ops.scale(x, 2.0)).backward()
        np.testing.assert_allclose(x.grad, np.full(3, 4.0))

    def test_zero_grad_clears(self, rng):
        """Test zero_grad() resets the buffer."""
        x = leaf((3,), rng)
        ops.sum(x).backward()
        x.zero_grad()
        assert x.grad is None

    def test_non_scalar_backward_raises(self, rng):
        """Test that backward() on a vector raises GradientError."""
        x = leaf((3,), rng)
        with pytest.raises(GradientError):
            (x * 2.0).backward()

    def test_disconnected_backward_raises(self):
        """Test that backward() on a constant raises GradientError."""
        with pytest.raises(GradientError):
            ops.sum(Tensor([1.0, 2.0])).backward()

    def test_constants_receive_no_grad(self, rng):
        """Test that operands without requires_grad keep grad None."""
        x = leaf((3,), rng)
        c = Tensor(rng.standard_normal(3))
        ops.sum(x * c).backward()
        assert c.grad is None

    def test_scalar_operands_on_both_sides(self, rng):
        """Test reflected operators with Python scalars."""
        x = leaf((3,), rng)
        y = 2.0 * x + 1.0 - x
        np.testing.assert_allclose(y.data, x.data + 1.0)
        z = 1.0 - x
        np.testing.assert_allclose(z.data, 1.0 - x.data)


class TestNoGrad:
    """Tests for the no_grad context."""

    def test_no_tape_inside_context(self, rng):
        """Test that results inside no_grad are untracked leaves."""
        x = leaf((3,), rng)
        with no_grad():
            y = x * 3.0
        assert not y.requires_grad
        assert y.is_leaf

    def test_restores_previous_state(self):
        """Test that nested contexts restore the enabled flag."""
        assert is_grad_enabled()
        with no_grad():
            with no_grad():
                assert not is_grad_enabled()
            assert not is_grad_enabled()
        assert is_grad_enabled()

    def test_is_thread_local(self):
        """Test that no_grad on one thread leaves other threads recording."""
        seen = {}
        entered = threading.Event()
        release = threading.Event()

        def disabled():
            with no_grad():
                entered.set()
                release.wait(timeout=5)

        def observer():
            entered.wait(timeout=5)
            seen["other"] = is_grad_enabled()
            release.set()

        threads = [threading.Thread(target=disabled), threading.Thread(target=observer)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=5)

        assert seen["other"] is True


class TestDebugChecks:
    """Tests for the NaN/Inf guard."""

    def test_non_finite_result_raises(self):
        """Test that an op producing Inf raises NumericalError under debug_checks."""
        x = Tensor(np.array([np.inf, 1.0]))
        with debug_checks():
            with pytest.raises(NumericalError, match="relu"):
                ops.relu(x)

    def test_off_by_default(self):
        """Test that non-finite values pass silently without the guard."""
        x = Tensor(np.array([np.inf, 1.0]))
        out = ops.relu(x)
        assert np.isinf(out.data[0])


class TestShapeErrors:
    """Tests for shape and mode validation."""

    def test_mixed_modes_rejected(self):
        """Test that float32 + float64 raises DTypeMismatchError."""
        a = Tensor(np.zeros(3, dtype=np.float32))
        b = Tensor(np.zeros(3, dtype=np.float64))
        with pytest.raises(DTypeMismatchError):
            ops.add(a, b)

    def test_general_broadcast_rejected(self):
        """Test that (2, 3) + (3,) raises BroadcastError."""
        with pytest.raises(BroadcastError):
            ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))

    def test_scalar_tensor_broadcasts(self, rng):
        """Test that a size-1 tensor combines with any shape and sums its grad."""
        x = leaf((2, 3), rng)
        s = Tensor(np.array([2.0]), requires_grad=True)
        ops.sum(x * s).backward()
        assert s.grad.shape == (1,)
        assert s.grad[0] == pytest.approx(x.data.sum())

    def test_invalid_permutation(self):
        """Test that a repeated axis raises InvalidPermutationError."""
        with pytest.raises(InvalidPermutationError):
            ops.permute(Tensor(np.zeros((2, 3, 4))), (0, 0, 1))

    def test_reshape_element_count(self):
        """Test that an impossible reshape raises ShapeError."""
        with pytest.raises(ShapeError):
            ops.reshape(Tensor(np.zeros(6)), (4, 2))

    def test_reshape_infers_extent(self):
        """Test a single -1 extent."""
        assert ops.reshape(Tensor(np.zeros(12)), (3, -1)).shape == (3, 4)

    def test_matmul_inner_mismatch(self):
        """Test that (2, 3) @ (4, 2) raises ShapeError."""
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_conv_kernel_larger_than_input(self):
        """Test that a kernel exceeding the padded input raises ShapeError."""
        x = Tensor(np.zeros((1, 1, 2, 2)))
        w = Tensor(np.zeros((1, 1, 3, 3)))
        with pytest.raises(ShapeError):
            ops.conv_nd(x, w)

    def test_batch_norm_needs_two_samples(self):
        """Test that train-mode statistics on one sample raise DegenerateBatchError."""
        x = Tensor(np.zeros((1, 2, 3)))
        with pytest.raises(DegenerateBatchError):
            ops.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)))

    def test_batch_norm_eval_accepts_one_sample(self):
        """Test that running statistics make a single sample valid."""
        x = Tensor(np.ones((1, 2, 3)))
        out, _, _ = ops.batch_norm(
            x, Tensor(np.ones(2)), Tensor(np.zeros(2)),
            running=(np.zeros(2), np.ones(2)),
        )
        assert out.shape == (1, 2, 3)


class TestElementwiseDispatch:
    """Tests for ops.elementwise()."""

    @pytest.mark.parametrize("kind,expected", [("relu", [0.0, 2.0]), ("tanh", list(np.tanh([-1.0, 2.0])))])
    def test_unary_kinds(self, kind, expected):
        """Test unary kinds ignore the second operand."""
        out = ops.elementwise(Tensor(np.array([-1.0, 2.0])), kind)
        np.testing.assert_allclose(out.data, expected)

    @pytest.mark.parametrize("kind,expected", [("add", [2.0, 5.0]), ("mul", [-3.0, 6.0]), ("scale", [-3.0, 6.0])])
    def test_binary_kinds(self, kind, expected):
        """Test add, mul and scale against a scalar operand."""
        out = ops.elementwise(Tensor(np.array([-1.0, 2.0])), kind, 3.0)
        np.testing.assert_allclose(out.data, expected)

    def test_missing_operand(self):
        """Test a binary kind without a second operand raises ShapeError."""
        with pytest.raises(ShapeError, match="second operand"):
            ops.elementwise(Tensor(np.zeros(2)), "add")

    def test_unknown_kind(self):
        """Test an unknown kind raises ConfigurationError."""
        with pytest.raises(ConfigurationError, match="Unknown elementwise kind"):
            ops.elementwise(Tensor(np.zeros(2)), "sigmoid", 1.0)


class TestShapeAlgebra:
    """Tests for permute, concat, split and broadcast_to."""

    @settings(max_examples=25, deadline=None)
    @given(st.permutations([0, 1, 2, 3]))
    def test_permute_inverse_restores(self, order):
        """Test that the inverse permutation recovers the original layout."""
        data = np.arange(2 * 3 * 4 * 5, dtype=np.float64).reshape(2, 3, 4, 5)
        back = ops.permute(ops.permute(Tensor(data), order), ops.inverse_permutation(order))
        np.testing.assert_array_equal(back.data, data)

    def test_permute_gradient_is_inverse(self, rng):
        """Test that the gradient of a permute flows back to the input layout."""
        x = leaf((2, 3, 4), rng)
        weights = Tensor(rng.standard_normal((4, 2, 3)))
        ops.sum(ops.permute(x, (2, 0, 1)) * weights).backward()
        np.testing.assert_allclose(x.grad, np.transpose(weights.data, (1, 2, 0)))

    def test_split_undoes_concat(self, rng):
        """Test concat followed by split returns the parts."""
        a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 5))
        joined = ops.concat([Tensor(a), Tensor(b)], axis=1)
        first, second = ops.split(joined, [3, 5], axis=1)
        np.testing.assert_array_equal(first.data, a)
        np.testing.assert_array_equal(second.data, b)

    def test_concat_gradient_routes_to_parts(self, rng):
        """Test that each part receives its own slice of the gradient."""
        a, b = leaf((2, 2), rng), leaf((3, 2), rng)
        weights = Tensor(rng.standard_normal((5, 2)))
        ops.sum(ops.concat([a, b], axis=0) * weights).backward()
        np.testing.assert_allclose(a.grad, weights.data[:2])
        np.testing.assert_allclose(b.grad, weights.data[2:])

    def test_broadcast_to_sums_gradient(self, rng):
        """Test that repeated axes are summed in the backward pass."""
        x = leaf((1, 3), rng)
        ops.sum(ops.broadcast_to(x, (4, 3))).backward()
        np.testing.assert_allclose(x.grad, np.full((1, 3), 4.0))

    def test_broadcast_to_rank_must_match(self):
        """Test that rank changes are refused."""
        with pytest.raises(BroadcastError):
            ops.broadcast_to(Tensor(np.zeros(3)), (2, 3))

    def test_mean_gradient(self, rng):
        """Test that the mean spreads 1/count to every reduced entry."""
        x = leaf((2, 4), rng)
        ops.sum(ops.mean(x, axis=(1,))).backward()
        np.testing.assert_allclose(x.grad, np.full((2, 4), 0.25))


class TestKernelsAgainstOracles:
    """Vectorized kernels against direct-summation references."""

    def test_batched_matmul(self, rng):
        """Test batched matmul against the triple loop."""
        a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5))
        out = ops.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, matmul_naive(a, b), atol=1e-12)

    @pytest.mark.parametrize("stride,padding", [((1, 1), (0, 0)), ((2, 1), (1, 0)), ((1, 2), (1, 1))])
    def test_conv2d(self, rng, stride, padding):
        """Test 2-D convolution with stride and padding."""
        x = rng.standard_normal((2, 3, 6, 5))
        w = rng.standard_normal((4, 3, 3, 2))
        b = rng.standard_normal(4)
        out = ops.conv_nd(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding)
        expected = conv_direct(x, w, b, stride=stride, padding=padding)
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_conv3d(self, rng):
        """Test 3-D convolution against direct summation."""
        x = rng.standard_normal((1, 2, 5, 4, 3))
        w = rng.standard_normal((3, 2, 3, 2, 2))
        out = ops.conv_nd(Tensor(x), Tensor(w), stride=(1, 2, 1), padding=(1, 0, 1))
        expected = conv_direct(x, w, stride=(1, 2, 1), padding=(1, 0, 1))
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_float32_mode_is_preserved(self, rng):
        """Test that float32 inputs give float32 outputs."""
        x = Tensor(rng.standard_normal((1, 1, 4, 4)), dtype=np.float32)
        w = Tensor(rng.standard_normal((2, 1, 2, 2)), dtype=np.float32)
        assert ops.conv_nd(x, w).dtype == np.float32


class TestKernelProperties:
    """Property tests for matmul and convolution."""

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16), st.floats(min_value=-3.0, max_value=3.0))
    def test_matmul_is_linear(self, seed, factor):
        """Test (a + s b) @ c equals a @ c + s (b @ c)."""
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
        c = rng.standard_normal((2, 4, 5))
        left = ops.matmul(Tensor(a + factor * b), Tensor(c)).data
        right = ops.matmul(Tensor(a), Tensor(c)).data + factor * ops.matmul(Tensor(b), Tensor(c)).data
        np.testing.assert_allclose(left, right, rtol=1e-5, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16))
    def test_conv_is_linear_without_bias(self, seed):
        """Test conv(x1 + x2) equals conv(x1) + conv(x2) when the bias is zero."""
        rng = np.random.default_rng(seed)
        x1, x2 = rng.standard_normal((2, 2, 5, 4)), rng.standard_normal((2, 2, 5, 4))
        w = Tensor(rng.standard_normal((3, 2, 3, 2)))

        def conv(x):
            return ops.conv_nd(Tensor(x), w, padding=(1, 1)).data

        np.testing.assert_allclose(conv(x1 + x2), conv(x1) + conv(x2), rtol=1e-5, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16))
    def test_conv_shift_equivariance(self, seed):
        """Test shifting the input one step along a padded axis shifts the interior output one step."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((1, 2, 7, 3))
        w, b = Tensor(rng.standard_normal((2, 2, 3, 1))), Tensor(rng.standard_normal(2))
        shifted = np.zeros_like(x)
        shifted[:, :, 1:] = x[:, :, :-1]
        out = ops.conv_nd(Tensor(x), w, b, padding=(1, 0)).data
        out_shifted = ops.conv_nd(Tensor(shifted), w, b, padding=(1, 0)).data
        np.testing.assert_allclose(out_shifted[:, :, 1:-1], out[:, :, :-2], atol=1e-10)


class TestInjectFault:
    """Tests for the gradient corruption context."""

    def test_scales_targeted_op(self, rng):
        """Test that gradients from the faulted op are multiplied."""
        x = leaf((3,), rng)
        with inject_fault("tanh", factor=2.0):
            ops.sum(ops.tanh(x)).backward()
        np.testing.assert_allclose(x.grad, 2.0 * (1.0 - np.tanh(x.data) ** 2))

    def test_other_ops_untouched(self, rng):
        """Test that a fault on one op leaves others exact."""
        x = leaf((3,), rng)
        with inject_fault("relu"):
            ops.sum(ops.scale(x, 3.0)).backward()
        np.testing.assert_allclose(x.grad, np.full(3, 3.0))

    def test_removed_on_exit(self, rng):
        """Test that leaving the context restores the exact rule."""
        x = leaf((3,), rng)
        with inject_fault("scale"):
            pass
        ops.sum(ops.scale(x, 3.0)).backward()
        np.testing.assert_allclose(x.grad, np.full(3, 3.0))
