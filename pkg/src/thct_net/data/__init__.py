"""Skeleton sequences: ingestion, generation, preprocessing and batching."""

from thct_net.data.skeleton import DatasetSplit, SkeletonSequence

__all__ = ["DatasetSplit", "SkeletonSequence"]
