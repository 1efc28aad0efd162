"""
Configuration Module
Model, data and training settings layered from defaults, environment,
config file and command-line flags.
"""

import logging
import os
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from dotenv import load_dotenv

from thct_net.exceptions import ConfigurationError


logger = logging.getLogger(__name__)

ENV_PREFIX = "THCT_"

# Valid permutation augmentation modes
VALID_PERMUTATION_MODES = ["sample", "epoch", "off"]

# Valid late-fusion spaces
VALID_FUSION_SPACES = ["logit", "probability"]

# Valid numeric modes
VALID_PRECISIONS = ["float32", "float64"]

VALID_PRESETS = ["full", "micro"]


def parse_bool(value: str) -> bool:
    normalized = value.strip().lower()
    if normalized in ("true", "1", "yes", "on"):
        return True
    if normalized in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_int_tuple(value: str) -> Tuple[int, ...]:
    value = value.strip().strip("()[]")
    if not value:
        return ()
    return tuple(int(part) for part in value.split(","))


@dataclass
class ModelConfig:
    """Flat record of every architecture, data and training setting."""

    # Data geometry
    num_classes: int = 4
    frames: int = 60
    joints: int = 25
    entities: int = 2
    normalize: bool = True
    permutation_mode: str = "sample"  # sample, epoch, off

    # Transformer stream
    window: Tuple[int, ...] = (20, 1, 2)
    transformer_layers: int = 3
    transformer_heads: int = 8
    embed_dim: int = 64
    qkv_channels: int = 8  # per head

    # CNN stream
    cnn_point_channels: int = 64
    cnn_temporal_channels: int = 16
    cnn_transpose_channels: Tuple[int, ...] = (96, 64)
    cnn_feature_channels: int = 64
    cnn_hidden: int = 256
    cnn_batchnorm: bool = True

    # Late fusion
    fusion_weight: float = 0.5
    fusion_space: str = "logit"

    # Optimization
    lr: float = 0.1
    lr_decay: float = 0.1
    milestones: Tuple[int, ...] = (60, 90)
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 110
    label_smoothing: float = 0.1
    temperature: float = 1.0
    seed: int = 0
    precision: str = "float32"

    # Data generation and run layout
    data_dir: str = "data"
    out_dir: str = "runs"
    per_class: int = 50
    val_fraction: float = 0.5
    noise: float = 0.05
    workers: int = 1

    # ------------------------------------------------------------------
    # Presets
    # ------------------------------------------------------------------

    @classmethod
    def full(cls) -> "ModelConfig":
        """Full-size defaults: window (20,1,2) on 60x25x2 gives 75 tokens."""
        return cls()

    @classmethod
    def micro(cls) -> "ModelConfig":
        """Four-token, width-8 model that trains in minutes on a CPU."""
        return cls(
            window=(15, 25, 2),
            transformer_layers=1,
            transformer_heads=2,
            embed_dim=8,
            qkv_channels=4,
            cnn_point_channels=8,
            cnn_temporal_channels=4,
            cnn_transpose_channels=(12, 8),
            cnn_feature_channels=8,
            cnn_hidden=32,
            epochs=30,
            milestones=(20, 25),
        )

    @classmethod
    def preset(cls, name: str) -> "ModelConfig":
        if name not in VALID_PRESETS:
            raise ConfigurationError(
                f"Preset must be one of: {', '.join(VALID_PRESETS)}. Got: {name}"
            )
        return cls.full() if name == "full" else cls.micro()

    # ------------------------------------------------------------------
    # Layered loading
    # ------------------------------------------------------------------

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def _coerce(cls, name: str, raw: Any) -> Any:
        ftype = {f.name: f.type for f in fields(cls)}[name]
        if not isinstance(raw, str):
            if typing.get_origin(ftype) is tuple:
                return tuple(int(v) for v in raw)
            return ftype(raw)
        if ftype is bool:
            return parse_bool(raw)
        if typing.get_origin(ftype) is tuple:
            return parse_int_tuple(raw)
        if ftype is str:
            return raw.strip()
        return ftype(raw.strip())

    def with_overrides(self, overrides: Mapping[str, Any], source: str = "override") -> "ModelConfig":
        """
        Return a copy with the given fields replaced (None values are skipped).

        Raises:
            ConfigurationError: On unknown keys or unparseable values.
        """
        known = set(self.field_names())
        changes: Dict[str, Any] = {}
        for key, raw in overrides.items():
            if raw is None:
                continue
            if key not in known:
                raise ConfigurationError(f"Unknown setting '{key}' ({source})")
            try:
                changes[key] = self._coerce(key, raw)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"Invalid value for '{key}' ({source}): {raw!r}") from e
        return replace(self, **changes)

    @classmethod
    def from_env(cls, base: Optional["ModelConfig"] = None) -> "ModelConfig":
        """
        Overlay THCT_<FIELD> environment variables (and .env) on base.

        Environment Variables:
            THCT_NUM_CLASSES, THCT_FRAMES, THCT_WINDOW ("20,1,2"), THCT_LR,
            THCT_EPOCHS, THCT_BATCH_SIZE, THCT_SEED, THCT_DATA_DIR,
            THCT_OUT_DIR, ... : one variable per field, upper-cased.
        """
        load_dotenv()
        base = base if base is not None else cls()
        overrides = {}
        for name in cls.field_names():
            value = os.environ.get(ENV_PREFIX + name.upper())
            if value not in (None, ""):
                overrides[name] = value
        if overrides:
            logger.debug(f"Environment overrides: {sorted(overrides)}")
        return base.with_overrides(overrides, source="environment")

    @classmethod
    def from_text(cls, text: str, base: Optional["ModelConfig"] = None) -> "ModelConfig":
        """Parse flat `key = value` lines; `#` starts a comment."""
        base = base if base is not None else cls()
        overrides: Dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            content = line.split("#", 1)[0].strip()
            if not content:
                continue
            if "=" not in content:
                raise ConfigurationError(f"Config line {lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in content.split("=", 1))
            if key not in cls.field_names():
                raise ConfigurationError(f"Config line {lineno}: unknown setting '{key}'")
            overrides[key] = value
        return base.with_overrides(overrides, source="config file")

    @classmethod
    def from_file(cls, path, base: Optional["ModelConfig"] = None) -> "ModelConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
        return cls.from_text(text, base)

    def to_text(self) -> str:
        """Serialize as `key = value` lines (floats via repr, tuples comma-joined)."""
        lines = ["# THCT-Net configuration"]
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------------
    # Derived values
    # ------------------------------------------------------------------

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    @property
    def token_grid(self) -> Tuple[int, int, int]:
        t, v, m = self.window
        return self.frames // t, self.joints // v, self.entities // m

    @property
    def token_count(self) -> int:
        tt, vt, mt = self.token_grid
        return tt * vt * mt

    @property
    def cnn_plane(self) -> Tuple[int, int]:
        """(height, width) of the residual block input: time x temporal channels, pooled once."""
        return self.frames // 2, self.cnn_temporal_channels // 2

    @property
    def cnn_flat_features(self) -> int:
        h, w = self.cnn_plane
        return 2 * self.cnn_feature_channels * (h // 2) * (w // 2)

    def train_config(self):
        from thct_net.training.optim import TrainConfig
        return TrainConfig(
            lr=self.lr,
            lr_decay=self.lr_decay,
            milestones=tuple(self.milestones),
            momentum=self.momentum,
            batch_size=self.batch_size,
            epochs=self.epochs,
            label_smoothing=self.label_smoothing,
            temperature=self.temperature,
            seed=self.seed,
        )

    def fusion_config(self):
        from thct_net.training.fusion import FusionConfig
        return FusionConfig(weight=self.fusion_weight, space=self.fusion_space)

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self) -> List[str]:
        """
        Validate configuration values.

        Returns:
            List of warning messages (empty if no warnings).

        Raises:
            ConfigurationError: If configuration values are invalid.
        """
        warnings = []

        for name in ("num_classes", "frames", "joints", "entities", "transformer_layers",
                     "transformer_heads", "embed_dim", "qkv_channels", "cnn_point_channels",
                     "cnn_temporal_channels", "cnn_feature_channels", "cnn_hidden",
                     "batch_size", "epochs", "per_class", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")

        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.frames < 2:
            raise ConfigurationError(f"frames must be at least 2, got {self.frames}")

        if len(self.window) != 3 or any(w < 1 for w in self.window):
            raise ConfigurationError(f"window must be three positive extents, got {self.window}")
        t, v, m = self.window
        if t > self.frames or v > self.joints or m > self.entities:
            raise ConfigurationError(
                f"window {self.window} exceeds input volume "
                f"({self.frames}, {self.joints}, {self.entities})"
            )
        remainders = (self.frames % t, self.joints % v, self.entities % m)
        if any(remainders):
            warnings.append(
                f"window {self.window} does not divide ({self.frames}, {self.joints}, "
                f"{self.entities}); trailing {remainders} are dropped"
            )

        if self.embed_dim % 2:
            raise ConfigurationError(f"embed_dim must be even for positional encoding, got {self.embed_dim}")
        if self.embed_dim % self.transformer_heads:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} must be divisible by transformer_heads {self.transformer_heads}"
            )

        if len(self.cnn_transpose_channels) < 1 or any(c < 1 for c in self.cnn_transpose_channels):
            raise ConfigurationError(
                f"cnn_transpose_channels must be positive widths, got {self.cnn_transpose_channels}"
            )
        if self.cnn_flat_features < 1:
            raise ConfigurationError(
                f"frames={self.frames} and cnn_temporal_channels={self.cnn_temporal_channels} "
                f"leave no features after pooling (need at least 4 of each)"
            )

        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigurationError(f"fusion_weight must lie in [0, 1], got {self.fusion_weight}")
        if self.fusion_space not in VALID_FUSION_SPACES:
            raise ConfigurationError(
                f"fusion_space must be one of: {', '.join(VALID_FUSION_SPACES)}. Got: {self.fusion_space}"
            )
        if self.permutation_mode not in VALID_PERMUTATION_MODES:
            raise ConfigurationError(
                f"permutation_mode must be one of: {', '.join(VALID_PERMUTATION_MODES)}. "
                f"Got: {self.permutation_mode}"
            )
        if self.precision not in VALID_PRECISIONS:
            raise ConfigurationError(
                f"precision must be one of: {', '.join(VALID_PRECISIONS)}. Got: {self.precision}"
            )

        if self.lr < 0:
            raise ConfigurationError(f"lr must be non-negative, got {self.lr}")
        if self.lr == 0:
            warnings.append("lr is 0: parameters will not change")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigurationError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigurationError(f"milestones must be strictly increasing, got {self.milestones}")
        if any(ms < 1 for ms in self.milestones):
            raise ConfigurationError(f"milestones must be positive, got {self.milestones}")
        if any(ms >= self.epochs for ms in self.milestones):
            warnings.append(
                f"milestones {self.milestones} reach past the last epoch ({self.epochs}); "
                f"later decays never apply"
            )

        if not 0.0 < self.val_fraction <= 1.0:
            raise ConfigurationError(f"val_fraction must lie in (0, 1], got {self.val_fraction}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be non-negative, got {self.noise}")
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch_size must be at least 2 for BatchNorm statistics, got {self.batch_size}"
            )

        return warnings
