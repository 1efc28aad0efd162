"""
Two-Stream Model
Holds the Transformer and CNN streams; each produces its own logits and
fusion happens on the scores afterwards.
"""

import logging
from typing import NamedTuple, Optional

import numpy as np

from thct_net.config import ModelConfig
from thct_net.models.cnn_stream import CnnStream
from thct_net.models.transformer_stream import TransformerStream
from thct_net.nn import Module
from thct_net.tensor.core import Tensor


logger = logging.getLogger(__name__)


class StreamLogits(NamedTuple):
    transformer: Tensor
    cnn: Tensor


class THCTNet(Module):
    """Transformer stream (parameters `transformer.*`) and CNN stream (`cnn.*`)."""

    def __init__(self, config: ModelConfig, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self._config = config
        self.transformer = TransformerStream(config, rng)
        self.cnn = CnnStream(config, rng)
        logger.info(
            f"Built THCT-Net: {self.transformer.parameter_count()} transformer + "
            f"{self.cnn.parameter_count()} CNN parameters ({config.precision})"
        )

    @property
    def config(self) -> ModelConfig:
        return self._config

    def forward(
        self,
        coords: Tensor,
        motion: Tensor,
        transformer_coords: Optional[Tensor] = None,
    ) -> StreamLogits:
        """
        Args:
            coords: (N, 3, T, V, M) in original entity order (CNN raw branch).
            motion: (N, 3, T, V, M) motion differences (CNN motion branch).
            transformer_coords: Transformer input, entity-permuted during
                training; defaults to coords.
        """
        t_in = coords if transformer_coords is None else transformer_coords
        return StreamLogits(self.transformer(t_in), self.cnn(coords, motion))
