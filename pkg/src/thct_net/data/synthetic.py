"""
Synthetic Interaction Generator
Two-person skeleton sequences drawn from parameterized motion archetypes.

Bodies use the 25-joint NTU layout. Each archetype scripts the relative
placement of the two bodies and, for the gesture classes, one arm chain;
per-sample scale, distance, timing and a global pose are randomized and
Gaussian noise is added last.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from thct_net.data.skeleton import DatasetSplit, SkeletonSequence
from thct_net.exceptions import ConfigurationError


logger = logging.getLogger(__name__)

ARCHETYPES: Tuple[str, ...] = ("approach", "retreat", "circle", "wave", "punch", "handshake")

JOINTS = 25
ENTITIES = 2

# Body frame: x forward, y up, z to the body's left. Meters.
REST_POSE = np.array([
    [0.00, 0.90, 0.00],    # spine base
    [0.00, 1.15, 0.00],    # spine mid
    [0.00, 1.45, 0.00],    # neck
    [0.00, 1.60, 0.00],    # head
    [0.00, 1.40, 0.18],    # left shoulder
    [0.00, 1.15, 0.22],    # left elbow
    [0.00, 0.90, 0.24],    # left wrist
    [0.00, 0.82, 0.24],    # left hand
    [0.00, 1.40, -0.18],   # right shoulder
    [0.00, 1.15, -0.22],   # right elbow
    [0.00, 0.90, -0.24],   # right wrist
    [0.00, 0.82, -0.24],   # right hand
    [0.00, 0.88, 0.10],    # left hip
    [0.00, 0.48, 0.10],    # left knee
    [0.00, 0.08, 0.10],    # left ankle
    [0.10, 0.02, 0.10],    # left foot
    [0.00, 0.88, -0.10],   # right hip
    [0.00, 0.48, -0.10],   # right knee
    [0.00, 0.08, -0.10],   # right ankle
    [0.10, 0.02, -0.10],   # right foot
    [0.00, 1.40, 0.00],    # spine shoulder
    [0.00, 0.74, 0.24],    # left hand tip
    [0.03, 0.80, 0.22],    # left thumb
    [0.00, 0.74, -0.24],   # right hand tip
    [0.03, 0.80, -0.22],   # right thumb
])

RIGHT_SHOULDER = 8
RIGHT_ARM = np.array([9, 10, 11, 23, 24])


def _raise_arm(pose: np.ndarray, angle: float) -> np.ndarray:
    """Swing the right arm forward/up about the shoulder by `angle` radians."""
    out = pose.copy()
    pivot = pose[RIGHT_SHOULDER]
    rel = pose[RIGHT_ARM] - pivot
    c, s = np.cos(angle), np.sin(angle)
    x = rel[:, 0] * c - rel[:, 1] * s
    y = rel[:, 0] * s + rel[:, 1] * c
    out[RIGHT_ARM, 0] = pivot[0] + x
    out[RIGHT_ARM, 1] = pivot[1] + y
    return out


def _place(pose: np.ndarray, position: np.ndarray, yaw: float) -> np.ndarray:
    """Rotate a body-frame pose about the vertical axis and translate it."""
    c, s = np.cos(yaw), np.sin(yaw)
    x = pose[:, 0] * c + pose[:, 2] * s
    z = -pose[:, 0] * s + pose[:, 2] * c
    return np.stack([x + position[0], pose[:, 1] + position[1], z + position[2]], axis=1)


def _facing_pair(pose_a, pose_b, distance: float) -> Tuple[np.ndarray, np.ndarray]:
    """Body A at -d/2 facing +x, body B at +d/2 facing -x."""
    a = _place(pose_a, np.array([-distance / 2.0, 0.0, 0.0]), 0.0)
    b = _place(pose_b, np.array([distance / 2.0, 0.0, 0.0]), np.pi)
    return a, b


# ----------------------------------------------------------------------
# Archetypes: (progress t in [0, 1], per-sample params, rest pose) -> two bodies
# ----------------------------------------------------------------------

def _approach(t, p, pose):
    distance = p["far"] - (p["far"] - p["near"]) * t
    return _facing_pair(pose, pose, distance)


def _retreat(t, p, pose):
    distance = p["near"] + (p["far"] - p["near"]) * t
    return _facing_pair(pose, pose, distance)


def _circle(t, p, pose):
    a = _place(pose, np.zeros(3), 0.0)
    phi = p["phase"] + p["turn"] * t
    radius = p["far"]
    position = radius * np.array([np.cos(phi), 0.0, np.sin(phi)])
    b = _place(pose, position, np.pi - phi)
    return a, b


def _wave(t, p, pose):
    angle = 2.4 + 0.5 * np.sin(2.0 * np.pi * p["cycles"] * t)
    return _facing_pair(_raise_arm(pose, angle), pose, p["far"])


def _punch(t, p, pose):
    angle = 0.5 * np.pi * np.sin(np.pi * t) ** 2
    return _facing_pair(_raise_arm(pose, angle), pose, p["near"] + 0.3)


def _handshake(t, p, pose):
    reach = min(1.0, 3.0 * t) * np.pi / 2.4
    angle = reach + 0.12 * np.sin(2.0 * np.pi * p["cycles"] * t) * (t > 1.0 / 3.0)
    arm = _raise_arm(pose, angle)
    return _facing_pair(arm, arm, p["near"] + 0.3)


_GENERATORS: Dict[str, Callable] = {
    "approach": _approach,
    "retreat": _retreat,
    "circle": _circle,
    "wave": _wave,
    "punch": _punch,
    "handshake": _handshake,
}


def _sample_params(rng: np.random.Generator) -> Dict[str, float]:
    return {
        "scale": rng.uniform(0.9, 1.1),
        "far": rng.uniform(1.6, 2.4),
        "near": rng.uniform(0.6, 0.9),
        "phase": rng.uniform(0.0, 2.0 * np.pi),
        "turn": rng.uniform(0.5, 0.75) * 2.0 * np.pi,
        "cycles": rng.uniform(1.5, 2.5),
        "yaw": rng.uniform(-np.pi / 6.0, np.pi / 6.0),
        "dx": rng.uniform(-0.5, 0.5),
        "dz": rng.uniform(-0.5, 0.5),
    }


def render_archetype(
    name: str,
    frames: int,
    rng: np.random.Generator,
    noise: float = 0.0,
) -> np.ndarray:
    """Draw one (3, frames, 25, 2) sequence of the named archetype."""
    if name not in _GENERATORS:
        raise ConfigurationError(f"Unknown archetype '{name}'. Known: {', '.join(ARCHETYPES)}")
    params = _sample_params(rng)
    pose = REST_POSE * params["scale"]
    generator = _GENERATORS[name]
    shift = np.array([params["dx"], 0.0, params["dz"]])

    coords = np.empty((3, frames, JOINTS, ENTITIES), dtype=np.float64)
    for i in range(frames):
        t = i / (frames - 1)
        for m, body in enumerate(generator(t, params, pose)):
            coords[:, i, :, m] = _place(body, shift, params["yaw"]).T
    if noise > 0:
        coords += rng.normal(0.0, noise, size=coords.shape)
    return coords.astype(np.float32)


def _class_counts(counts, num_classes: int) -> List[int]:
    if isinstance(counts, int):
        return [counts] * num_classes
    counts = [int(c) for c in counts]
    if len(counts) != num_classes:
        raise ConfigurationError(f"{len(counts)} counts for {num_classes} classes")
    return counts


def generate_synthetic_dataset(
    class_names: Sequence[str],
    counts,
    noise: float = 0.05,
    seed: int = 0,
    frames: int = 60,
    role: str = "train",
    id_offset: int = 0,
) -> DatasetSplit:
    """
    Generate a labeled split from archetype names.

    Args:
        class_names: Archetypes, one per class (label = position).
        counts: Samples per class (int or one per class).
        noise: Gaussian coordinate noise sigma in meters.
        seed: Generator seed; identical arguments give identical data.
        frames: Frames per sequence.
        role: Split role.
        id_offset: First sample index used in source ids.
    """
    class_names = list(class_names)
    if len(class_names) < 2:
        raise ConfigurationError(f"Need at least 2 classes, got {len(class_names)}")
    if frames < 2:
        raise ConfigurationError(f"Need at least 2 frames, got {frames}")
    per_class = _class_counts(counts, len(class_names))
    rng = np.random.default_rng(seed)

    samples = []
    index = id_offset
    for label, name in enumerate(class_names):
        for _ in range(per_class[label]):
            coords = render_archetype(name, frames, rng, noise)
            samples.append(SkeletonSequence(coords, label=label, source_id=f"syn-{index:06d}"))
            index += 1

    # Interleave classes deterministically so splits are not label-sorted on disk
    order = rng.permutation(len(samples))
    samples = [samples[i] for i in order]
    logger.debug(f"Generated {len(samples)} {role} samples over {len(class_names)} classes")
    return DatasetSplit(samples, len(class_names), class_names, role=role)


def archetype_names(num_classes: int) -> List[str]:
    """The first `num_classes` archetypes."""
    if not 2 <= num_classes <= len(ARCHETYPES):
        raise ConfigurationError(
            f"Synthetic data supports 2 to {len(ARCHETYPES)} classes, got {num_classes}"
        )
    return list(ARCHETYPES[:num_classes])


def generate_synthetic_splits(
    num_classes: int,
    per_class: int,
    val_fraction: float = 0.5,
    noise: float = 0.05,
    seed: int = 0,
    frames: int = 60,
    val_per_class: Optional[int] = None,
) -> Tuple[DatasetSplit, DatasetSplit]:
    """
    Train and val splits with disjoint sample ids and independent streams.

    The val split has round(per_class * val_fraction) samples per class
    unless val_per_class is given.
    """
    names = archetype_names(num_classes)
    if per_class < 1:
        raise ConfigurationError(f"per_class must be positive, got {per_class}")
    if val_per_class is None:
        val_per_class = max(1, int(round(per_class * val_fraction)))
    train_seed, val_seed = np.random.SeedSequence(seed).spawn(2)
    train = generate_synthetic_dataset(
        names, per_class, noise, int(train_seed.generate_state(1)[0]), frames, role="train",
    )
    val = generate_synthetic_dataset(
        names, val_per_class, noise, int(val_seed.generate_state(1)[0]), frames, role="val",
        id_offset=per_class * num_classes,
    )
    return train, val
