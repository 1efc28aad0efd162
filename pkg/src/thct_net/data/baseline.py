"""1-nearest-neighbour learnability baseline on flattened coordinates."""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from thct_net.data.skeleton import DatasetSplit
from thct_net.exceptions import DataError


logger = logging.getLogger(__name__)


def nearest_neighbor_accuracy(train: DatasetSplit, test: DatasetSplit) -> float:
    """Fraction of test samples whose Euclidean nearest train sample shares their label."""
    if train.shape != test.shape:
        raise DataError(f"Split shapes differ: {train.shape} vs {test.shape}")
    train_x = np.stack([s.coords.ravel() for s in train.samples]).astype(np.float64)
    test_x = np.stack([s.coords.ravel() for s in test.samples]).astype(np.float64)
    nearest = cdist(test_x, train_x).argmin(axis=1)
    accuracy = float(np.mean(train.labels[nearest] == test.labels))
    logger.info(f"1-NN baseline: {accuracy:.3f} on {len(test)} samples")
    return accuracy
