"""
Batch Loader Module
Per-split preprocessing and seeded mini-batch iteration.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence

import numpy as np

from thct_net.data.preprocess import (
    center_coords,
    motion_difference,
    pad_entities,
    permute_entity_axis,
    resample_frames,
    sample_entity_permutation,
)
from thct_net.data.skeleton import DatasetSplit
from thct_net.exceptions import DataError


logger = logging.getLogger(__name__)


@dataclass
class Batch:
    """
    One mini-batch.

    coords and motion feed the CNN stream in original entity order;
    transformer_coords carries the (possibly permuted) Transformer input.
    """
    coords: np.ndarray               # (N, 3, T, V, M)
    motion: np.ndarray               # (N, 3, T, V, M)
    transformer_coords: np.ndarray   # (N, 3, T, V, M)
    labels: np.ndarray               # (N,)
    indices: np.ndarray              # (N,) positions in the prepared split

    def __len__(self) -> int:
        return len(self.labels)


class PreparedSplit:
    """
    A split preprocessed once for a model geometry.

    Each sample is resampled to `frames`, padded to `entities`, optionally
    centered, and its motion difference computed.
    """

    def __init__(
        self,
        split: DatasetSplit,
        frames: int,
        joints: int,
        entities: int,
        normalize: bool = True,
        dtype=np.float32,
    ):
        self.role = split.role
        self.num_classes = split.num_classes
        self.class_names = list(split.class_names)
        self.source_ids = split.source_ids()

        coords = []
        for seq in split.samples:
            if seq.joints != joints:
                raise DataError(
                    f"Sample '{seq.source_id}' has {seq.joints} joints, model expects {joints}"
                )
            seq = pad_entities(resample_frames(seq, frames), entities)
            c = center_coords(seq.coords) if normalize else seq.coords
            coords.append(c)
        self.coords = np.stack(coords).astype(dtype)
        self.motion = np.stack([motion_difference(c) for c in self.coords]).astype(dtype)
        self.labels = split.labels
        logger.debug(f"Prepared {len(self)} {self.role} samples with shape {self.coords.shape[1:]}")

    @classmethod
    def from_config(cls, split: DatasetSplit, config) -> "PreparedSplit":
        return cls(split, config.frames, config.joints, config.entities,
                   config.normalize, config.numpy_dtype)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def entities(self) -> int:
        return self.coords.shape[-1]

    def batch(self, indices: Sequence[int], perms: Optional[List[tuple]] = None) -> Batch:
        indices = np.asarray(indices, dtype=np.int64)
        coords = self.coords[indices]
        if perms is None:
            transformer = coords
        else:
            transformer = np.stack([
                permute_entity_axis(c, p) for c, p in zip(coords, perms)
            ])
        return Batch(coords, self.motion[indices], transformer, self.labels[indices], indices)


def batch_bounds(count: int, batch_size: int) -> List[tuple]:
    """Chunk [0, count) by batch_size; a trailing chunk of one joins the previous chunk."""
    bounds = [(start, min(start + batch_size, count)) for start in range(0, count, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        last = bounds.pop()
        bounds[-1] = (bounds[-1][0], last[1])
    return bounds


class BatchLoader:
    """
    Iterates a PreparedSplit in mini-batches.

    Shuffling and permutation draws consume `rng` on the calling thread in
    sample order, so an epoch is a pure function of the generator state.
    """

    def __init__(
        self,
        prepared: PreparedSplit,
        batch_size: int,
        shuffle: bool = False,
        rng: Optional[np.random.Generator] = None,
        permutation_mode: str = "off",
    ):
        if (shuffle or permutation_mode != "off") and rng is None:
            raise DataError("A generator is required for shuffling or permutation")
        self.prepared = prepared
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.rng = rng
        self.permutation_mode = permutation_mode

    def __len__(self) -> int:
        return len(batch_bounds(len(self.prepared), self.batch_size))

    def __iter__(self) -> Iterator[Batch]:
        n = len(self.prepared)
        order = self.rng.permutation(n) if self.shuffle else np.arange(n)

        perms = None
        m = self.prepared.entities
        if self.permutation_mode == "epoch":
            shared = sample_entity_permutation(m, self.rng, "train")
            perms = [shared] * n
        elif self.permutation_mode == "sample":
            perms = [sample_entity_permutation(m, self.rng, "train") for _ in range(n)]

        for start, stop in batch_bounds(n, self.batch_size):
            yield self.prepared.batch(
                order[start:stop], None if perms is None else perms[start:stop]
            )
