"""
Preprocessing Module
Frame resampling, entity padding, centering, motion differences and entity
permutations.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from thct_net.data.skeleton import SkeletonSequence
from thct_net.exceptions import DataError, InvalidPermutationError


logger = logging.getLogger(__name__)

CoordsLike = Union[SkeletonSequence, np.ndarray]

# Contexts in which a permutation may be drawn
TRAIN_CONTEXT = "train"


def _coords(value: CoordsLike) -> np.ndarray:
    return value.coords if isinstance(value, SkeletonSequence) else np.asarray(value)


def resample_indices(frames: int, target: int) -> np.ndarray:
    """Nearest-index rule floor(i * T / T_target)."""
    return (np.arange(target) * frames) // target


def resample_frames(seq: SkeletonSequence, target: int) -> SkeletonSequence:
    """Resample to exactly `target` frames; identity when the count already matches."""
    if target < 2:
        raise DataError(f"Target frame count must be at least 2, got {target}")
    if seq.frames == target:
        return seq
    indices = resample_indices(seq.frames, target)
    return seq.with_coords(seq.coords[:, indices])


def pad_entities(seq: SkeletonSequence, target: int) -> SkeletonSequence:
    """Append all-zero entities up to `target`."""
    m = seq.entities
    if m > target:
        raise DataError(
            f"Sequence '{seq.source_id}' has {m} entities, more than the {target} allowed"
        )
    if m == target:
        return seq
    pad = np.zeros(seq.coords.shape[:3] + (target - m,), dtype=seq.coords.dtype)
    return seq.with_coords(np.concatenate([seq.coords, pad], axis=3))


def present_entities(coords: np.ndarray) -> np.ndarray:
    """Boolean mask over M: entities with at least one nonzero coordinate."""
    return np.any(coords != 0, axis=(0, 1, 2))


def center_coords(coords: np.ndarray) -> np.ndarray:
    """Subtract the sequence-mean coordinate of the present entities from them."""
    present = present_entities(coords)
    if not present.any():
        return coords.copy()
    centroid = coords[:, :, :, present].mean(axis=(1, 2, 3), dtype=np.float64)
    out = coords.copy()
    out[:, :, :, present] -= centroid.reshape(3, 1, 1, 1).astype(coords.dtype)
    return out


def center_sequence(seq: SkeletonSequence) -> SkeletonSequence:
    return seq.with_coords(center_coords(seq.coords))


def motion_difference(value: CoordsLike) -> np.ndarray:
    """
    Frame-to-frame joint displacement.

    out[:, t] = coords[:, t+1] - coords[:, t] for t < T-1; the last frame
    is zero so both streams see the same shape.
    """
    coords = _coords(value)
    if coords.ndim != 4 or coords.shape[1] < 2:
        raise DataError(f"Motion difference needs (3, T>=2, V, M), got shape {coords.shape}")
    out = np.zeros_like(coords)
    out[:, :-1] = coords[:, 1:] - coords[:, :-1]
    return out


def validate_permutation(perm: Sequence[int], entities: int) -> Tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(entities)):
        raise InvalidPermutationError(f"{perm} is not a permutation of {entities} entities")
    return perm


def permute_entity_axis(coords: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Reorder the last (entity) axis of a (..., M) coordinate array."""
    perm = validate_permutation(perm, coords.shape[-1])
    return np.ascontiguousarray(coords[..., list(perm)])


def permute_entities(seq: SkeletonSequence, perm: Sequence[int]) -> SkeletonSequence:
    """Entity slot k of the result holds entity perm[k] of the input."""
    return seq.with_coords(permute_entity_axis(seq.coords, perm))


def sample_entity_permutation(
    entities: int, rng: np.random.Generator, context: str = TRAIN_CONTEXT
) -> Tuple[int, ...]:
    """Uniform random order in the train context, identity anywhere else."""
    if entities < 1:
        raise DataError(f"Entity count must be positive, got {entities}")
    if context != TRAIN_CONTEXT or entities == 1:
        return tuple(range(entities))
    return tuple(int(p) for p in rng.permutation(entities))
