"""Storage modules for THCT-Net."""

from thct_net.storage.binary import BinaryReader, BinaryWriter
from thct_net.storage.metrics_log import MetricsLog, MetricsRow

__all__ = ["BinaryReader", "BinaryWriter", "MetricsLog", "MetricsRow"]
