"""Integration test fixtures."""

import pytest

from thct_net.config import ModelConfig
from thct_net.data.synthetic import generate_synthetic_splits


@pytest.fixture(scope="module")
def synthetic_benchmark():
    """4 classes, 200 train / 100 val, noise 0.05, seed 7, 60 frames."""
    return generate_synthetic_splits(4, 50, val_fraction=0.5, noise=0.05, seed=7, frames=60)


@pytest.fixture
def micro_run_config(tmp_path) -> ModelConfig:
    """Micro preset writing into a temporary run directory."""
    return ModelConfig.micro().with_overrides(
        {"num_classes": 4, "seed": 7, "out_dir": str(tmp_path / "run"), "workers": 2}
    )
