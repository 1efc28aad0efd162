"""
Pytest configuration and fixtures for thct-net tests.

PERFORMANCE: Synthetic datasets and prepared splits are cached with
lru_cache so that modules sharing a geometry generate it once.
"""

from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from thct_net.config import ModelConfig
from thct_net.data.synthetic import generate_synthetic_splits


def tiny_config(**overrides) -> ModelConfig:
    """
    Smallest trainable geometry: 8 frames, 5 joints, 2 entities.

    Transformer window (2, 5, 2) gives 4 tokens; CNN widths are the micro ones.
    """
    base = replace(
        ModelConfig.micro(),
        frames=8, joints=5, entities=2, window=(2, 5, 2),
        num_classes=2, batch_size=4, epochs=2, milestones=(),
        out_dir="runs-test", data_dir="data-test",
    )
    return replace(base, **overrides)


@lru_cache(maxsize=8)
def _synthetic_splits(num_classes: int, per_class: int, frames: int, seed: int, noise: float):
    return generate_synthetic_splits(num_classes, per_class, 0.5, noise, seed, frames)


def synthetic_splits(num_classes: int = 2, per_class: int = 6, frames: int = 8,
                     seed: int = 3, noise: float = 0.05):
    """Cached synthetic (train, val) splits with 25 joints and 2 entities."""
    return _synthetic_splits(num_classes, per_class, frames, seed, noise)


@lru_cache(maxsize=4)
def _joint_subset_splits(num_classes: int, per_class: int, seed: int):
    """Synthetic splits cut down to the first 5 joints for the tiny geometry."""
    from thct_net.data.skeleton import DatasetSplit

    train, val = _synthetic_splits(num_classes, per_class, 8, seed, 0.05)

    def cut(split):
        samples = [s.with_coords(s.coords[:, :, :5, :]) for s in split.samples]
        return DatasetSplit(samples, split.num_classes, list(split.class_names), split.role)

    return cut(train), cut(val)


def tiny_splits(num_classes: int = 2, per_class: int = 6, seed: int = 3):
    """Cached (train, val) splits matching tiny_config()."""
    return _joint_subset_splits(num_classes, per_class, seed)


@pytest.fixture
def rng():
    """Seeded generator, fresh per test."""
    return np.random.default_rng(1234)


@pytest.fixture
def micro_config():
    return tiny_config()


@pytest.fixture
def tiny_data():
    return tiny_splits()


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    """Keep THCT_* variables from the developer's shell or .env out of tests."""
    import os

    for key in list(os.environ):
        if key.startswith("THCT_"):
            monkeypatch.delenv(key, raising=False)
    monkeypatch.setattr("thct_net.config.load_dotenv", lambda *a, **k: False)
