"""
Dataset Cache Module

One binary file per split: `THCTDS1` magic, u32 version, u32 role code,
u32 class count, class-name table, u32 record count, then per record
label/T/V/M (u32), f32 coordinates, u32 original frame count and the
source id. All fields little-endian.
"""

import logging
from pathlib import Path
from typing import Union

from thct_net.data.skeleton import VALID_ROLES, DatasetSplit, SkeletonSequence
from thct_net.exceptions import DataError, DatasetCacheError
from thct_net.storage.binary import BinaryReader, BinaryWriter


logger = logging.getLogger(__name__)

MAGIC = b"THCTDS1"
VERSION = 1
ROLE_CODES = {role: code for code, role in enumerate(VALID_ROLES)}

PathLike = Union[str, Path]


def encode_split(split: DatasetSplit) -> bytes:
    out = BinaryWriter()
    out.raw(MAGIC)
    out.u32(VERSION)
    out.u32(ROLE_CODES[split.role])
    out.u32(split.num_classes)
    for name in split.class_names:
        out.text(name)
    out.u32(len(split.samples))
    for seq in split.samples:
        out.u32(seq.label)
        _, t, v, m = seq.coords.shape
        out.u32(t)
        out.u32(v)
        out.u32(m)
        out.array(seq.coords, "<f4")
        out.u32(seq.original_frames)
        out.text(seq.source_id)
    return out.getvalue()


def decode_split(data: bytes, label: str = "dataset cache") -> DatasetSplit:
    reader = BinaryReader(data, DatasetCacheError, label)
    magic = bytes(data[:len(MAGIC)])
    if magic != MAGIC:
        raise DatasetCacheError(f"{label}: bad magic {magic!r}, expected {MAGIC!r}")
    reader.raw(len(MAGIC))
    version = reader.u32()
    if version != VERSION:
        raise DatasetCacheError(f"{label}: unsupported version {version}")
    role_code = reader.u32()
    if role_code >= len(VALID_ROLES):
        raise DatasetCacheError(f"{label}: unknown role code {role_code}")
    num_classes = reader.u32()
    class_names = [reader.text() for _ in range(num_classes)]
    count = reader.u32()

    samples = []
    for _ in range(count):
        label_value = reader.u32()
        t, v, m = reader.u32(), reader.u32(), reader.u32()
        coords = reader.array((3, t, v, m), "<f4")
        original = reader.u32()
        source_id = reader.text()
        try:
            samples.append(SkeletonSequence(coords, label_value, source_id, original))
        except DataError as e:
            raise DatasetCacheError(f"{label}: invalid record '{source_id}': {e}") from e
    if reader.remaining():
        raise DatasetCacheError(f"{label}: {reader.remaining()} unexpected trailing bytes")

    try:
        return DatasetSplit(samples, num_classes, class_names, role=VALID_ROLES[role_code])
    except DataError as e:
        raise DatasetCacheError(f"{label}: {e}") from e


def write_split(path: PathLike, split: DatasetSplit) -> Path:
    """Write one split through a temporary file; the parent directory is created if needed."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(encode_split(split))
        tmp.replace(path)
    except OSError as e:
        raise DatasetCacheError(f"Failed to write dataset cache {path}: {e}") from e
    logger.info(f"Wrote {len(split)} {split.role} samples to {path}")
    return path


def read_split(path: PathLike) -> DatasetSplit:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetCacheError(f"Failed to read dataset cache {path}: {e}") from e
    split = decode_split(data, label=str(path))
    logger.info(f"Read {len(split)} {split.role} samples from {path}")
    return split


def split_path(directory: PathLike, role: str) -> Path:
    return Path(directory) / f"{role}.thctds"

