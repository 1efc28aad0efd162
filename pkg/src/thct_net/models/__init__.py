"""Transformer stream, CNN stream and the two-stream container."""

from thct_net.models.cnn_stream import CnnStream
from thct_net.models.thct import StreamLogits, THCTNet
from thct_net.models.transformer_stream import TransformerStream, WindowSpec

__all__ = ["CnnStream", "StreamLogits", "THCTNet", "TransformerStream", "WindowSpec"]
