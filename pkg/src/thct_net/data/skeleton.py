"""
Skeleton Data Types
Labeled coordinate sequences and dataset splits.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from thct_net.exceptions import DataError


VALID_ROLES = ("train", "val", "test")


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """
    One interaction sample.

    Attributes:
        coords: (3, T, V, M) float32 coordinates in meters.
        label: Class index; -1 for unlabeled parser output.
        source_id: File name or generator sample id.
        original_frames: Frame count before resampling.
    """
    coords: np.ndarray
    label: int = -1
    source_id: str = ""
    original_frames: int = 0

    def __post_init__(self):
        coords = np.ascontiguousarray(self.coords, dtype=np.float32)
        if coords.ndim != 4 or coords.shape[0] != 3:
            raise DataError(f"coords must be (3, T, V, M), got shape {coords.shape}")
        _, t, v, m = coords.shape
        if t < 2 or v < 1 or m < 1:
            raise DataError(f"Need T >= 2, V >= 1, M >= 1, got T={t}, V={v}, M={m}")
        if not np.isfinite(coords).all():
            raise DataError(f"Sequence '{self.source_id}' contains non-finite coordinates")
        object.__setattr__(self, "coords", coords)
        if self.original_frames == 0:
            object.__setattr__(self, "original_frames", t)

    @property
    def frames(self) -> int:
        return self.coords.shape[1]

    @property
    def joints(self) -> int:
        return self.coords.shape[2]

    @property
    def entities(self) -> int:
        return self.coords.shape[3]

    def with_coords(self, coords: np.ndarray) -> "SkeletonSequence":
        """Same label and metadata, new coordinates."""
        return SkeletonSequence(coords, self.label, self.source_id, self.original_frames)


@dataclass
class DatasetSplit:
    """A labeled collection of sequences for one role."""
    samples: List[SkeletonSequence]
    num_classes: int
    class_names: List[str] = field(default_factory=list)
    role: str = "train"

    def __post_init__(self):
        if not self.samples:
            raise DataError(f"{self.role} split is empty")
        if self.role not in VALID_ROLES:
            raise DataError(f"Role must be one of {VALID_ROLES}, got '{self.role}'")
        if not self.class_names:
            self.class_names = [f"class_{k}" for k in range(self.num_classes)]
        if len(self.class_names) != self.num_classes:
            raise DataError(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError(f"Class names are not unique: {self.class_names}")
        for sample in self.samples:
            if not 0 <= sample.label < self.num_classes:
                raise DataError(
                    f"Sample '{sample.source_id}' has label {sample.label} "
                    f"outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """(T, V, M) of the first sample."""
        first = self.samples[0]
        return first.frames, first.joints, first.entities

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=self.num_classes)
        return {name: int(c) for name, c in zip(self.class_names, counts)}

    def source_ids(self) -> List[str]:
        return [s.source_id for s in self.samples]
