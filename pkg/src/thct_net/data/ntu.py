"""
NTU Skeleton Format
Reader and writer for `.skeleton` text files, file-name metadata and the
cross-subject / cross-setup evaluation splits.

Layout: line 1 is the frame count; each frame has a body-count line, then
per body a 10-field info line, a joint-count line and one 12-field line per
joint whose first three fields are x y z in meters.
"""

import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, TextIO, Tuple, Union

import numpy as np

from thct_net.data.preprocess import pad_entities, resample_frames
from thct_net.data.skeleton import DatasetSplit, SkeletonSequence
from thct_net.exceptions import DataError, SkeletonParseError


logger = logging.getLogger(__name__)

NTU_JOINTS = 25
BODY_INFO_FIELDS = 10
JOINT_FIELDS = 12

FILENAME_PATTERN = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")

# Two-person interaction classes
MUTUAL_ACTIONS: Tuple[int, ...] = tuple(range(50, 61)) + tuple(range(106, 121))

# Performer ids used for training under the cross-subject protocol
XSUB_TRAIN_SUBJECTS = frozenset([
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38,
    45, 46, 47, 49, 50, 52, 53, 54, 55, 56, 57, 58, 59, 70, 74, 78, 80, 81, 82,
    83, 84, 85, 86, 89, 91, 92, 93, 94, 95, 97, 98, 100, 103,
])

VALID_PROTOCOLS = ["xsub", "xset"]


@dataclass
class NtuSkeleton:
    """Parsed file: coords (3, T, 25, M_max) with absent bodies zero-filled."""
    coords: np.ndarray
    body_counts: List[int]

    @property
    def frames(self) -> int:
        return self.coords.shape[1]

    def to_sequence(self, label: int = -1, source_id: str = "") -> SkeletonSequence:
        return SkeletonSequence(self.coords, label=label, source_id=source_id,
                                original_frames=self.frames)


@dataclass(frozen=True)
class NtuFileInfo:
    setup: int
    camera: int
    performer: int
    replication: int
    action: int

    @property
    def is_mutual(self) -> bool:
        return self.action in MUTUAL_ACTIONS


class _LineReader:
    """Yields whitespace-split fields of non-blank lines, tracking 1-based line numbers."""

    def __init__(self, lines: Iterable[str]):
        self._lines = enumerate(lines, start=1)
        self.line = 0

    def fields(self, what: str) -> List[str]:
        for lineno, raw in self._lines:
            self.line = lineno
            parts = raw.split()
            if parts:
                return parts
        raise SkeletonParseError(f"unexpected end of file while reading {what}", self.line + 1)

    def count(self, what: str) -> int:
        parts = self.fields(what)
        if len(parts) != 1:
            raise SkeletonParseError(f"expected a single {what}, got {len(parts)} fields", self.line)
        try:
            value = int(parts[0])
        except ValueError:
            raise SkeletonParseError(f"non-numeric {what} {parts[0]!r}", self.line) from None
        if value < 0:
            raise SkeletonParseError(f"negative {what} {value}", self.line)
        return value

    def numbers(self, what: str, expected: int) -> List[float]:
        parts = self.fields(what)
        if len(parts) != expected:
            raise SkeletonParseError(
                f"{what} has {len(parts)} fields, expected {expected}", self.line
            )
        try:
            return [float(p) for p in parts]
        except ValueError:
            bad = next(p for p in parts if not _is_number(p))
            raise SkeletonParseError(f"non-numeric field {bad!r} in {what}", self.line) from None

    def remaining(self) -> Optional[int]:
        """Line number of the first non-blank line left, if any."""
        for lineno, raw in self._lines:
            if raw.strip():
                return lineno
        return None


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def parse_ntu_skeleton(stream: Union[TextIO, Iterable[str], str]) -> NtuSkeleton:
    """
    Parse one `.skeleton` text stream.

    Args:
        stream: Open text file, iterable of lines or the full text.

    Raises:
        SkeletonParseError: On truncation, non-numeric fields, joint counts
            other than 25, non-finite coordinates or trailing content;
            `.line` names the line.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = _LineReader(stream)

    num_frames = reader.count("frame count")
    frames: List[List[np.ndarray]] = []
    for _ in range(num_frames):
        num_bodies = reader.count("body count")
        bodies = []
        for _ in range(num_bodies):
            reader.numbers("body info line", BODY_INFO_FIELDS)
            num_joints = reader.count("joint count")
            if num_joints != NTU_JOINTS:
                raise SkeletonParseError(
                    f"joint count {num_joints}, expected {NTU_JOINTS}", reader.line
                )
            joints = np.empty((NTU_JOINTS, 3), dtype=np.float32)
            for j in range(num_joints):
                xyz = reader.numbers("joint line", JOINT_FIELDS)[:3]
                if not np.all(np.isfinite(xyz)):
                    raise SkeletonParseError(f"non-finite coordinate in joint {j + 1}: {xyz}", reader.line)
                joints[j] = xyz
            bodies.append(joints)
        frames.append(bodies)

    trailing = reader.remaining()
    if trailing is not None:
        raise SkeletonParseError("unexpected content after the last frame", trailing)

    body_counts = [len(bodies) for bodies in frames]
    max_bodies = max(body_counts, default=0) or 1
    coords = np.zeros((3, num_frames, NTU_JOINTS, max_bodies), dtype=np.float32)
    for t, bodies in enumerate(frames):
        for m, joints in enumerate(bodies):
            coords[:, t, :, m] = joints.T
    return NtuSkeleton(coords=coords, body_counts=body_counts)


def read_ntu_skeleton(path: Union[str, Path]) -> NtuSkeleton:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_ntu_skeleton(f)
    except SkeletonParseError as e:
        raise SkeletonParseError(e.reason, e.line, source=str(path)) from e
    except OSError as e:
        raise DataError(f"Cannot read skeleton file {path}: {e}") from e


def _format(value: float) -> str:
    return repr(float(value))


def serialize_ntu_skeleton(
    coords: np.ndarray,
    body_counts: Optional[List[int]] = None,
) -> str:
    """
    Write (3, T, 25, M) coordinates in the `.skeleton` layout.

    Body info and the non-xyz joint fields are zero-filled. Frame t lists
    body_counts[t] bodies (all M by default).
    """
    coords = np.asarray(coords, dtype=np.float32)
    if coords.ndim != 4 or coords.shape[0] != 3 or coords.shape[2] != NTU_JOINTS:
        raise DataError(f"Expected (3, T, {NTU_JOINTS}, M) coordinates, got {coords.shape}")
    _, frames, _, entities = coords.shape
    if body_counts is None:
        body_counts = [entities] * frames
    if len(body_counts) != frames or any(not 0 <= b <= entities for b in body_counts):
        raise DataError(f"body_counts {body_counts} do not fit {frames} frames of {entities} bodies")

    info_line = " ".join(["0"] * BODY_INFO_FIELDS)
    joint_tail = " ".join(["0"] * (JOINT_FIELDS - 3))
    lines = [str(frames)]
    for t in range(frames):
        lines.append(str(body_counts[t]))
        for m in range(body_counts[t]):
            lines.append(info_line)
            lines.append(str(NTU_JOINTS))
            for j in range(NTU_JOINTS):
                x, y, z = coords[:, t, j, m]
                lines.append(f"{_format(x)} {_format(y)} {_format(z)} {joint_tail}")
    return "\n".join(lines) + "\n"


def parse_ntu_filename(name: str) -> NtuFileInfo:
    """SsssCcccPpppRrrrAaaa.skeleton -> setup/camera/performer/replication/action."""
    match = FILENAME_PATTERN.search(Path(name).name)
    if match is None:
        raise DataError(f"'{name}' does not follow the SsssCcccPpppRrrrAaaa naming scheme")
    return NtuFileInfo(*(int(g) for g in match.groups()))


def protocol_role(info: NtuFileInfo, protocol: str) -> str:
    """train or val under the cross-subject or cross-setup protocol."""
    if protocol == "xsub":
        return "train" if info.performer in XSUB_TRAIN_SUBJECTS else "val"
    if protocol == "xset":
        return "train" if info.setup % 2 == 0 else "val"
    raise DataError(f"Protocol must be one of: {', '.join(VALID_PROTOCOLS)}. Got: {protocol}")


def _iter_skeleton_files(directory: Path) -> Iterator[Path]:
    yield from sorted(directory.glob("*.skeleton"))


def load_ntu_directory(
    directory: Union[str, Path],
    frames: int = 60,
    entities: int = 2,
    protocol: str = "xsub",
    mutual_only: bool = True,
) -> Tuple[DatasetSplit, DatasetSplit]:
    """
    Ingest a local directory of `.skeleton` files into train/val splits.

    Sequences are resampled to `frames` and padded to `entities`; extra
    bodies beyond `entities` are dropped with a warning. Files with fewer
    than two frames are skipped.

    Raises:
        DataError: If the directory is missing or a split ends up empty.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"NTU directory not found: {directory}")
    if protocol not in VALID_PROTOCOLS:
        raise DataError(f"Protocol must be one of: {', '.join(VALID_PROTOCOLS)}. Got: {protocol}")

    actions = list(MUTUAL_ACTIONS) if mutual_only else list(range(1, 121))
    label_of = {action: k for k, action in enumerate(actions)}
    class_names = [f"A{action:03d}" for action in actions]

    splits = {"train": [], "val": []}
    skipped = 0
    for path in _iter_skeleton_files(directory):
        info = parse_ntu_filename(path.name)
        if info.action not in label_of:
            continue
        parsed = read_ntu_skeleton(path)
        if parsed.frames < 2:
            logger.warning(f"Skipping {path.name}: {parsed.frames} frame(s)")
            skipped += 1
            continue
        coords = parsed.coords
        if coords.shape[3] > entities:
            logger.warning(
                f"{path.name}: keeping the first {entities} of {coords.shape[3]} bodies"
            )
            coords = coords[..., :entities]
        seq = SkeletonSequence(coords, label=label_of[info.action], source_id=path.stem,
                               original_frames=parsed.frames)
        seq = pad_entities(resample_frames(seq, frames), entities)
        splits[protocol_role(info, protocol)].append(seq)

    logger.info(
        f"Loaded NTU directory {directory}: {len(splits['train'])} train, "
        f"{len(splits['val'])} val, {skipped} skipped ({protocol})"
    )
    return (
        DatasetSplit(splits["train"], len(actions), class_names, role="train"),
        DatasetSplit(splits["val"], len(actions), class_names, role="val"),
    )
