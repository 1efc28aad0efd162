"""
Checkpoint Module

Layout (little-endian): magic `THCT1`, u32 version, config text, u32 name
count and the name table, then one record per name (name, u8 dtype code,
u32 rank, u32 extents, payload), then the trailer: generator state as JSON
text, u32 completed epochs, f64 best validation top-1, u32 epoch of that best.

Model parameters and buffers keep their state-dict names; optimizer
velocities are stored under `optim.velocity.<parameter name>`.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from thct_net.config import ModelConfig
from thct_net.exceptions import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigurationError,
)
from thct_net.storage.binary import BinaryReader, BinaryWriter


logger = logging.getLogger(__name__)

MAGIC = b"THCT1"
VERSION = 1
VELOCITY_PREFIX = "optim.velocity."

DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
CODE_DTYPES = {0: "<f4", 1: "<f8"}

PathLike = Union[str, Path]


@dataclass
class Checkpoint:
    """Everything needed to rebuild a model and continue training."""
    config: ModelConfig
    model_state: Dict[str, np.ndarray]
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    rng_state: Dict[str, Any] = field(default_factory=dict)
    best_top1: float = -1.0
    best_epoch: int = 0
    version: int = VERSION

    def tensors(self) -> Dict[str, np.ndarray]:
        """Flat name -> array table in file order."""
        table = dict(self.model_state)
        for name, value in self.velocity.items():
            table[VELOCITY_PREFIX + name] = value
        return table

    def generator(self) -> np.random.Generator:
        """A PCG64 generator positioned at the saved state."""
        bit_generator = np.random.PCG64()
        if self.rng_state:
            bit_generator.state = self.rng_state
        return np.random.Generator(bit_generator)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    table = ckpt.tensors()
    out = BinaryWriter()
    out.raw(MAGIC)
    out.u32(ckpt.version)
    out.text(ckpt.config.to_text())
    out.u32(len(table))
    for name in table:
        out.text(name)
    for name, value in table.items():
        value = np.asarray(value)
        if value.dtype not in DTYPE_CODES:
            raise CheckpointError(f"'{name}' has unsupported dtype {value.dtype}")
        code = DTYPE_CODES[value.dtype]
        out.text(name)
        out.u8(code)
        out.u32(value.ndim)
        for extent in value.shape:
            out.u32(extent)
        out.array(value, CODE_DTYPES[code])
    out.text(json.dumps(ckpt.rng_state, sort_keys=True))
    out.u32(ckpt.epoch)
    out.f64(ckpt.best_top1)
    out.u32(ckpt.best_epoch)
    return out.getvalue()


def decode_checkpoint(data: bytes, label: str = "checkpoint") -> Checkpoint:
    if bytes(data[:len(MAGIC)]) != MAGIC:
        raise CheckpointMagicError(f"{label}: bad magic {bytes(data[:len(MAGIC)])!r}, expected {MAGIC!r}")
    reader = BinaryReader(data, CheckpointTruncatedError, label)
    reader.raw(len(MAGIC))
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(f"{label}: format version {version}, expected {VERSION}")
    config_text = reader.text()
    try:
        config = ModelConfig.from_text(config_text)
    except ConfigurationError as e:
        raise CheckpointError(f"{label}: embedded config is invalid: {e}") from e

    names = [reader.text() for _ in range(reader.u32())]
    if len(set(names)) != len(names):
        raise CheckpointError(f"{label}: duplicate tensor names")
    model_state: Dict[str, np.ndarray] = {}
    velocity: Dict[str, np.ndarray] = {}
    for expected in names:
        name = reader.text()
        if name != expected:
            raise CheckpointError(f"{label}: record '{name}' out of order, expected '{expected}'")
        code = reader.u8()
        if code not in CODE_DTYPES:
            raise CheckpointError(f"{label}: '{name}' has unknown dtype code {code}")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        value = reader.array(shape, CODE_DTYPES[code])
        if name.startswith(VELOCITY_PREFIX):
            velocity[name[len(VELOCITY_PREFIX):]] = value
        else:
            model_state[name] = value

    try:
        rng_state = json.loads(reader.text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{label}: generator state is not valid JSON") from e
    epoch = reader.u32()
    best_top1 = reader.f64()
    best_epoch = reader.u32()
    if reader.remaining():
        raise CheckpointError(f"{label}: {reader.remaining()} unexpected trailing bytes")
    return Checkpoint(config, model_state, velocity, epoch, rng_state, best_top1, best_epoch, version)


def save_checkpoint(path: PathLike, ckpt: Checkpoint) -> Path:
    path = Path(path)
    data = encode_checkpoint(ckpt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
    except OSError as e:
        raise CheckpointError(f"Failed to write checkpoint {path}: {e}") from e
    logger.debug(f"Saved checkpoint {path} ({len(data)} bytes, epoch {ckpt.epoch})")
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Failed to read checkpoint {path}: {e}") from e
    return decode_checkpoint(data, label=str(path))
