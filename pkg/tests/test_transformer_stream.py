"""
Tests for the Transformer stream - window tokenization, positional
encoding, attention blocks and the stream head.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thct_net.config import ModelConfig
from thct_net.exceptions import ConfigurationError, ShapeError
from thct_net.models.transformer_stream import (
    AttentionBlock,
    TransformerStream,
    WindowSpec,
    attention_block,
    make_temporal_aggregation,
    positional_encoding,
    temporal_aggregate,
    tokenize,
    tokens_grid,
    transformer_forward,
    untokenize,
)
from thct_net.oracles import attention_block_naive
from thct_net.tensor import Tensor, grad_check
from thct_net.tensor import ops

from tests.conftest import tiny_config


def make_block(rng, channels=8, heads=2, qkv=4, grid=(4, 1, 1), window=WindowSpec(2, 5, 2)):
    return AttentionBlock(channels, heads, qkv, grid, window, rng, dtype=np.float64)


def block_weights(block):
    d = block.channels
    return dict(
        positional=positional_encoding(block.tokens, d),
        wq=block.q_proj.weight.data.reshape(-1, d), bq=block.q_proj.bias.data,
        wk=block.k_proj.weight.data.reshape(-1, d), bk=block.k_proj.bias.data,
        A=block.A.data, alpha=float(block.alpha.data),
        w_ffn=block.ffn.weight.data.reshape(d, d), b_ffn=block.ffn.bias.data,
        heads=block.heads, score_width=block.score_width,
    )


class TestWindowSpec:
    """Tests for window geometry."""

    def test_full_size_token_count(self):
        """Test window (20, 1, 2) over 60x25x2 gives 75 tokens."""
        assert WindowSpec(20, 1, 2).token_count(60, 25, 2) == 75
        assert ModelConfig.full().token_count == 75

    def test_remainders_dropped(self):
        """Test non-dividing windows floor the grid."""
        assert WindowSpec(4, 2, 1).token_grid(10, 5, 2) == (2, 2, 2)

    def test_window_exceeding_input(self):
        """Test U = 0 is refused."""
        with pytest.raises(ShapeError):
            WindowSpec(61, 1, 2).token_grid(60, 25, 2)


class TestTokenize:
    """Tests for tokenize(), tokens_grid() and untokenize()."""

    def test_token_layout(self, rng):
        """Test each token is its window flattened in (C, t, v, m) order."""
        x = rng.standard_normal((3, 6, 4, 2))
        window = WindowSpec(3, 2, 1)
        tokens, origins = tokenize(x, window)
        assert tokens.shape == (2 * 2 * 2, 3 * 3 * 2 * 1)
        for token, (t0, v0, m0) in zip(tokens.data, origins):
            expected = x[:, t0:t0 + 3, v0:v0 + 2, m0:m0 + 1].reshape(-1)
            np.testing.assert_array_equal(token, expected)

    def test_time_major_order(self, rng):
        """Test windows enumerate time first, then joint, then entity."""
        _, origins = tokenize(rng.standard_normal((3, 4, 4, 2)), WindowSpec(2, 2, 1))
        assert origins.tolist()[:3] == [[0, 0, 0], [0, 0, 1], [0, 2, 0]]
        assert origins[4].tolist() == [2, 0, 0]

    def test_untokenize_restores_covered_volume(self, rng):
        """Test scattering tokens back gives the windowed input."""
        x = rng.standard_normal((3, 7, 5, 2))
        window = WindowSpec(3, 2, 2)
        tokens, origins = tokenize(x, window)
        back = untokenize(tokens.data, origins, window, 3)
        np.testing.assert_array_equal(back, x[:, :6, :4, :2])

    def test_grid_form_matches_token_list(self, rng):
        """Test the batched grid form carries the same token vectors."""
        x = rng.standard_normal((3, 6, 4, 2))
        window = WindowSpec(3, 2, 2)
        tokens, _ = tokenize(x, window)
        grid = tokens_grid(Tensor(x[None]), window)
        assert grid.shape == (1, 3 * 3 * 2 * 2, 2, 2, 1)
        np.testing.assert_array_equal(grid.data.reshape(grid.shape[1], -1).T, tokens.data)

    def test_rank_check(self):
        """Test a batched input is refused by tokenize()."""
        with pytest.raises(ShapeError):
            tokenize(np.zeros((1, 3, 4, 4, 2)), WindowSpec(2, 2, 1))


class TestPositionalEncoding:
    """Tests for the sinusoidal encoding."""

    def test_first_position(self):
        """Test position 0 alternates sin(0) = 0 and cos(0) = 1."""
        pe = positional_encoding(3, 6)
        np.testing.assert_allclose(pe[0], [0, 1, 0, 1, 0, 1])

    def test_known_value(self):
        """Test PE[pos, 2i] = sin(pos / 10000^(2i/d))."""
        pe = positional_encoding(5, 4)
        assert pe[3, 2] == pytest.approx(np.sin(3 / 100.0))
        assert pe[3, 3] == pytest.approx(np.cos(3 / 100.0))

    def test_odd_width(self):
        """Test odd widths are refused."""
        with pytest.raises(ShapeError):
            positional_encoding(3, 5)


class TestAttentionBlock:
    """Tests for AttentionBlock."""

    def test_matches_naive_oracle(self, rng):
        """Test the token-list forward against the per-entry loops."""
        block = make_block(rng)
        block.A.data[...] = rng.standard_normal(block.A.shape) * 0.1
        block.alpha.data[...] = 0.7
        block.ffn.bias.data[...] = rng.standard_normal(8) * 0.1
        tokens = rng.standard_normal((4, 8))
        out = attention_block(Tensor(tokens), block)
        expected = attention_block_naive(tokens, **block_weights(block))
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_zero_attention(self, rng):
        """Test alpha = 0 and A = 0 silence the attention path."""
        block = make_block(rng)
        block.alpha.data[...] = 0.0
        out = block.forward_tokens(Tensor(rng.standard_normal((4, 8))))
        assert not out.data.any()

    def test_identity_attention(self, rng):
        """Test alpha = 0 and A = I pass V through to the feed-forward."""
        block = make_block(rng)
        block.alpha.data[...] = 0.0
        block.A.data[...] = np.eye(4)
        tokens = rng.standard_normal((4, 8))
        out = block.forward_tokens(Tensor(tokens))
        w = block.ffn.weight.data.reshape(8, 8)
        np.testing.assert_allclose(
            out.data, np.maximum(tokens + (tokens @ w.T + block.ffn.bias.data), 0.0), atol=1e-12
        )

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=2**16), st.floats(min_value=-4.0, max_value=4.0))
    def test_mixing_is_linear_in_values(self, seed, factor):
        """Test fixed scores mix x1 + s x2 into attend(x1) + s attend(x2)."""
        rng = np.random.default_rng(seed)
        block = make_block(rng)
        block.A.data[...] = rng.standard_normal(block.A.shape) * 0.1
        x1, x2 = rng.standard_normal((2, 8, 4, 1, 1)), rng.standard_normal((2, 8, 4, 1, 1))
        scores = block.attention_scores(Tensor(x1))
        combined = block.attend(scores, Tensor(x1 + factor * x2)).data
        separate = block.attend(scores, Tensor(x1)).data + factor * block.attend(scores, Tensor(x2)).data
        np.testing.assert_allclose(combined, separate, rtol=1e-5, atol=1e-9)

    def test_doubling_values_doubles_mixing(self, rng):
        """Test scores frozen at x give twice the head output for 2x."""
        block = make_block(rng)
        x = rng.standard_normal((1, 8, 4, 1, 1))
        scores = block.attention_scores(Tensor(x))
        np.testing.assert_allclose(
            block.attend(scores, Tensor(2.0 * x)).data, 2.0 * block.attend(scores, Tensor(x)).data, rtol=1e-12
        )

    def test_scores_shape(self, rng):
        """Test scores are (N, H, U, U)."""
        block = make_block(rng)
        x = Tensor(rng.standard_normal((3, 8, 4, 1, 1)))
        assert block.attention_scores(x).shape == (3, 2, 4, 4)

    def test_scale_uses_window_volume(self, rng):
        """Test the score scaling width is window volume x per-head width."""
        assert make_block(rng).score_width == 20 * 4

    def test_wrong_token_count(self, rng):
        """Test an input of a different grid is refused."""
        block = make_block(rng)
        with pytest.raises(ShapeError):
            block.forward_tokens(Tensor(rng.standard_normal((5, 8))))

    def test_heads_must_divide_width(self, rng):
        """Test width 8 with 3 heads is refused."""
        with pytest.raises(ConfigurationError):
            make_block(rng, heads=3)

    def test_gradients(self, rng):
        """Test every block parameter against finite differences."""
        block = make_block(rng)
        block.A.data[...] = rng.standard_normal(block.A.shape) * 0.1
        x = Tensor(rng.standard_normal((2, 8, 4, 1, 1)), requires_grad=True)
        weights = Tensor(rng.standard_normal((2, 8, 4, 1, 1)))
        params = {"x": x, **dict(block.named_parameters())}
        report = grad_check(lambda: ops.sum(ops.mul(block(x), weights)), params, max_entries=10)
        assert report.passed, report.failures()


class TestTemporalAggregation:
    """Tests for the time-axis convolution after the blocks."""

    def test_keeps_extents(self, rng):
        """Test padding 2 on time keeps (N, d, T', V', M')."""
        layer = make_temporal_aggregation(4, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((2, 4, 6, 3, 1)))
        assert temporal_aggregate(x, layer).shape == (2, 4, 6, 3, 1)

    def test_centre_tap_is_identity(self, rng):
        """Test a kernel with only the centre tap set passes tokens through."""
        layer = make_temporal_aggregation(3, rng, dtype=np.float64)
        layer.weight.data[...] = 0.0
        layer.weight.data[:, :, 2, 0, 0] = np.eye(3)
        layer.bias.data[...] = 0.0
        x = rng.standard_normal((1, 3, 5, 2, 1))
        np.testing.assert_allclose(temporal_aggregate(Tensor(x), layer).data, x)

    def test_receptive_field_is_five_frames(self, rng):
        """Test a change at frame 0 reaches only frames 0 to 2."""
        layer = make_temporal_aggregation(2, rng, dtype=np.float64)
        x = rng.standard_normal((1, 2, 8, 1, 1))
        bumped = x.copy()
        bumped[:, :, 0] += 1.0
        diff = np.abs(temporal_aggregate(Tensor(bumped), layer).data - temporal_aggregate(Tensor(x), layer).data)
        assert diff[:, :, 3:].max() == 0.0
        assert diff[:, :, :3].max() > 0.0


class TestTransformerStream:
    """Tests for the full stream."""

    def test_logit_shape(self, rng):
        """Test (N, 3, T, V, M) -> (N, K)."""
        config = tiny_config(precision="float64", num_classes=3)
        stream = TransformerStream(config, rng)
        x = Tensor(rng.standard_normal((4, 3, 8, 5, 2)))
        assert transformer_forward(x, stream).shape == (4, 3)

    def test_grid_and_blocks(self, rng):
        """Test the stream geometry follows the config."""
        config = tiny_config(transformer_layers=2)
        stream = TransformerStream(config, rng)
        assert stream.grid == (4, 1, 1)
        assert len(stream.blocks) == 2
        assert all(b.tokens == 4 for b in stream.blocks)

    def test_parameter_names(self, rng):
        """Test learned A and alpha are registered per block."""
        names = [n for n, _ in TransformerStream(tiny_config(), rng).named_parameters()]
        assert "blocks.0.A" in names
        assert "blocks.0.alpha" in names
        assert names[0] == "embed.weight"
        assert names[-1] == "head.bias"

    def test_eval_is_batch_independent(self, rng):
        """Test eval-mode logits of a sample do not depend on its batch."""
        stream = TransformerStream(tiny_config(precision="float64"), rng).eval()
        x = rng.standard_normal((3, 3, 8, 5, 2))
        full = stream(Tensor(x)).data
        single = stream(Tensor(x[1:2])).data
        np.testing.assert_allclose(full[1:2], single, atol=1e-12)
