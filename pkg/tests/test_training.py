"""
Tests for the loss, optimizer, learning-rate schedule, late fusion and
classification metrics.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.tensor import Tensor, grad_check
from thct_net.training import (
    FusionConfig,
    SGDNesterov,
    TrainConfig,
    compute_metrics,
    cross_entropy_smoothed,
    fusion_sweep,
    late_fuse,
    lr_at_epoch,
    sgd_nesterov_step,
)
from thct_net.training.fusion import SWEEP_WEIGHTS
from thct_net.training.loss import smoothed_targets, target_entropy


class TestCrossEntropy:
    """Tests for label-smoothed cross-entropy."""

    def test_uniform_logits_give_log_k(self):
        """Test equal logits cost log K whatever the smoothing."""
        for smoothing in (0.0, 0.1, 0.5):
            loss = cross_entropy_smoothed(Tensor(np.zeros(4), dtype=np.float64), 2, smoothing)
            assert loss.item() == pytest.approx(np.log(4))

    def test_no_smoothing_is_negative_log_likelihood(self, rng):
        """Test eps = 0 reduces to -log softmax[target]."""
        z = rng.standard_normal(5)
        loss = cross_entropy_smoothed(Tensor(z), 3, smoothing=0.0).item()
        log_p = z - np.log(np.exp(z).sum())
        assert loss == pytest.approx(-log_p[3])

    def test_smoothed_targets(self):
        """Test q = (1 - eps) onehot + eps / K."""
        q = smoothed_targets(4, [1], 0.1)[0]
        np.testing.assert_allclose(q, [0.025, 0.925, 0.025, 0.025])

    def test_loss_bounded_by_target_entropy(self):
        """Test a confident correct prediction approaches, never passes, H(q)."""
        z = np.array([0.0, 9.0, 0.0, 0.0])
        loss = cross_entropy_smoothed(Tensor(z), 1, 0.1).item()
        assert loss >= target_entropy(4, 0.1) - 1e-9

    def test_batch_mean(self, rng):
        """Test the batched loss is the mean of per-sample losses."""
        z = rng.standard_normal((3, 4))
        targets = [0, 3, 1]
        batched = cross_entropy_smoothed(Tensor(z), targets).item()
        single = [cross_entropy_smoothed(Tensor(z[i]), t).item() for i, t in enumerate(targets)]
        assert batched == pytest.approx(np.mean(single))

    def test_temperature_scales_logits(self, rng):
        """Test tau = 2 equals plain loss on halved logits."""
        z = rng.standard_normal(4)
        hot = cross_entropy_smoothed(Tensor(z), 0, 0.1, temperature=2.0).item()
        plain = cross_entropy_smoothed(Tensor(z / 2.0), 0, 0.1).item()
        assert hot == pytest.approx(plain)

    def test_gradient(self, rng):
        """Test the closed-form backward against finite differences."""
        z = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        report = grad_check(lambda: cross_entropy_smoothed(z, [1, 0, 2], 0.1, 1.5), {"z": z})
        assert report.passed

    def test_invalid_arguments(self):
        """Test bad temperature, smoothing and targets."""
        z = Tensor(np.zeros(3))
        with pytest.raises(ConfigurationError):
            cross_entropy_smoothed(z, 0, temperature=0.0)
        with pytest.raises(ConfigurationError):
            cross_entropy_smoothed(z, 0, smoothing=1.0)
        with pytest.raises(ShapeError):
            cross_entropy_smoothed(z, 3)
        with pytest.raises(ShapeError):
            cross_entropy_smoothed(Tensor(np.zeros(1)), 0)


class TestNesterov:
    """Tests for the SGD-with-Nesterov-momentum update."""

    def test_first_two_steps_by_hand(self):
        """Test v <- mu v + g; p <- p - lr (g + mu v) twice."""
        p, g, v = np.array([1.0]), np.array([2.0]), np.zeros(1)
        sgd_nesterov_step([p], [g], [v], lr=0.1, momentum=0.9)
        np.testing.assert_allclose(v, [2.0])
        np.testing.assert_allclose(p, [0.62])
        sgd_nesterov_step([p], [g], [v], lr=0.1, momentum=0.9)
        np.testing.assert_allclose(v, [3.8])
        np.testing.assert_allclose(p, [0.078])

    def test_zero_lr_keeps_parameters(self):
        """Test lr = 0 only moves the velocity."""
        p, v = np.array([1.0, -1.0]), np.zeros(2)
        sgd_nesterov_step([p], [np.ones(2)], [v], lr=0.0, momentum=0.9)
        np.testing.assert_array_equal(p, [1.0, -1.0])
        np.testing.assert_array_equal(v, [1.0, 1.0])

    def test_length_mismatch(self):
        """Test differing list lengths raise ShapeError."""
        with pytest.raises(ShapeError):
            sgd_nesterov_step([np.zeros(1)], [], [np.zeros(1)], 0.1, 0.9)

    def test_optimizer_uses_grad_buffers(self):
        """Test SGDNesterov.step() reads .grad and treats None as zero."""
        a = Tensor(np.array([1.0]), requires_grad=True)
        b = Tensor(np.array([1.0]), requires_grad=True)
        a.grad = np.array([1.0])
        opt = SGDNesterov([("a", a), ("b", b)], momentum=0.5)
        opt.step(lr=1.0)
        np.testing.assert_allclose(a.data, [1.0 - (1.0 + 0.5)])
        np.testing.assert_array_equal(b.data, [1.0])
        opt.zero_grad()
        assert a.grad is None

    def test_state_round_trip(self):
        """Test velocities survive state_dict() / load_state_dict()."""
        a = Tensor(np.zeros(3), requires_grad=True)
        a.grad = np.ones(3)
        opt = SGDNesterov([("a", a)])
        opt.step(0.1)
        other = SGDNesterov([("a", Tensor(np.zeros(3), requires_grad=True))])
        other.load_state_dict(opt.state_dict())
        np.testing.assert_array_equal(other.velocity["a"], opt.velocity["a"])

    def test_state_mismatch(self):
        """Test loading buffers for other parameters raises ShapeError."""
        opt = SGDNesterov([("a", Tensor(np.zeros(3), requires_grad=True))])
        with pytest.raises(ShapeError):
            opt.load_state_dict({"b": np.zeros(3)})
        with pytest.raises(ShapeError):
            opt.load_state_dict({"a": np.zeros(2)})


class TestSchedule:
    """Tests for the milestone learning-rate schedule."""

    def test_milestones(self):
        """Test 0.1 decays to 0.01 at epoch 60 and 0.001 at 90."""
        cfg = TrainConfig()
        assert lr_at_epoch(cfg, 0) == pytest.approx(0.1)
        assert lr_at_epoch(cfg, 59) == pytest.approx(0.1)
        assert lr_at_epoch(cfg, 60) == pytest.approx(0.01)
        assert lr_at_epoch(cfg, 90) == pytest.approx(0.001)
        assert lr_at_epoch(cfg, 109) == pytest.approx(0.001)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=200))
    def test_non_increasing(self, epoch):
        """Test the schedule never increases."""
        cfg = TrainConfig()
        assert lr_at_epoch(cfg, epoch + 1) <= lr_at_epoch(cfg, epoch)

    def test_invalid_settings(self):
        """Test negative lr and unordered milestones are refused."""
        with pytest.raises(ConfigurationError):
            TrainConfig(lr=-0.1)
        with pytest.raises(ConfigurationError):
            TrainConfig(milestones=(90, 60))


class TestLateFusion:
    """Tests for late fusion of stream scores."""

    def test_endpoints_return_single_stream(self, rng):
        """Test w = 1 and w = 0 reproduce each stream exactly."""
        s_t, s_c = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        np.testing.assert_array_equal(late_fuse(s_t, s_c, FusionConfig(1.0)), s_t)
        np.testing.assert_array_equal(late_fuse(s_t, s_c, FusionConfig(0.0)), s_c)

    def test_default_is_logit_average(self, rng):
        """Test w = 0.5 in logit space is the plain mean."""
        s_t, s_c = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
        np.testing.assert_allclose(late_fuse(s_t, s_c, FusionConfig()), (s_t + s_c) / 2.0)

    def test_probability_space(self, rng):
        """Test probability-space fusion yields distributions."""
        s_t, s_c = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        fused = late_fuse(s_t, s_c, FusionConfig(0.3, "probability"))
        np.testing.assert_allclose(fused.sum(axis=1), np.ones(4))

    def test_shape_mismatch(self):
        """Test score arrays must agree."""
        with pytest.raises(ShapeError):
            late_fuse(np.zeros((2, 3)), np.zeros((2, 4)), FusionConfig())

    def test_invalid_config(self):
        """Test weights outside [0, 1] and unknown spaces."""
        with pytest.raises(ConfigurationError):
            FusionConfig(weight=1.5)
        with pytest.raises(ConfigurationError):
            FusionConfig(space="rank")

    def test_sweep(self):
        """Test the 11-point sweep and its endpoints."""
        labels = np.array([0, 1, 1])
        s_t = np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        s_c = np.array([[0.0, 1.0], [0.0, 2.0], [0.0, 2.0]])
        rows = fusion_sweep(s_t, s_c, labels)
        assert [w for w, _ in rows] == list(SWEEP_WEIGHTS)
        assert rows[0] == (0.0, pytest.approx(2 / 3))
        assert rows[-1] == (1.0, pytest.approx(2 / 3))
        assert max(acc for _, acc in rows) == pytest.approx(1.0)


class TestMetrics:
    """Tests for compute_metrics()."""

    def test_confusion_and_top1(self):
        """Test counts, overall and per-class accuracy."""
        m = compute_metrics([0, 1, 1, 2], [0, 1, 2, 2], 3)
        np.testing.assert_array_equal(m.confusion, [[1, 0, 0], [0, 1, 0], [0, 1, 1]])
        assert m.top1 == pytest.approx(0.75)
        np.testing.assert_allclose(m.per_class, [1.0, 1.0, 0.5])
        assert m.total == 4

    def test_empty_class_is_nan(self):
        """Test classes without samples report NaN."""
        m = compute_metrics([0, 0], [0, 0], 2)
        assert np.isnan(m.per_class[1])

    def test_format_confusion(self):
        """Test the printed table lists every class."""
        text = compute_metrics([0, 1], [0, 1], 2).format_confusion(["wave", "punch"])
        assert "wave" in text and "punch" in text
        assert len(text.splitlines()) == 3
