"""
Metrics Log Module

Append-only CSV log of per-epoch loss and accuracy for a training run.
"""

import csv
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

from thct_net.exceptions import StorageError


HEADER = ("epoch", "split", "loss", "top1")


@dataclass
class MetricsRow:
    """One line of the metrics log."""
    epoch: int
    split: str
    loss: float
    top1: float


class MetricsLog:
    """
    CSV storage for epoch metrics.

    Each line is `epoch,split,loss,top1` with epochs counted from 1. Floats
    are written with repr so values read back unchanged.
    """

    FILENAME = "metrics.csv"

    def __init__(self, path: Union[str, Path], truncate: bool = False):
        """
        Initialize the log.

        Args:
            path: CSV file path.
            truncate: Start a fresh file even if one exists (new runs);
                resumed runs keep appending.
        """
        self.path = Path(path)
        self._lock = threading.Lock()
        self._init_storage(truncate)

    def _init_storage(self, truncate: bool) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if truncate or not self.path.exists() or self.path.stat().st_size == 0:
                with open(self.path, "w", encoding="utf-8", newline="") as f:
                    csv.writer(f).writerow(HEADER)
        except OSError as e:
            raise StorageError(f"Failed to initialize metrics log: {e}") from e

    def append(self, epoch: int, split: str, loss: float, top1: float) -> None:
        with self._lock:
            try:
                with open(self.path, "a", encoding="utf-8", newline="") as f:
                    csv.writer(f).writerow([epoch, split, repr(float(loss)), repr(float(top1))])
            except OSError as e:
                raise StorageError(f"Failed to append metrics: {e}") from e

    def truncate_after(self, epoch: int) -> None:
        """Drop rows past `epoch`, used when a run resumes from an earlier checkpoint."""
        with self._lock:
            rows = [r for r in self._read_all() if r.epoch <= epoch]
            try:
                with open(self.path, "w", encoding="utf-8", newline="") as f:
                    writer = csv.writer(f)
                    writer.writerow(HEADER)
                    for r in rows:
                        writer.writerow([r.epoch, r.split, repr(r.loss), repr(r.top1)])
            except OSError as e:
                raise StorageError(f"Failed to rewrite metrics log: {e}") from e

    def read(self, split: Optional[str] = None) -> List[MetricsRow]:
        with self._lock:
            rows = self._read_all()
        return [r for r in rows if split is None or r.split == split]

    def _read_all(self) -> List[MetricsRow]:
        try:
            with open(self.path, "r", encoding="utf-8", newline="") as f:
                reader = csv.DictReader(f)
                if tuple(reader.fieldnames or ()) != HEADER:
                    raise StorageError(f"{self.path}: unexpected header {reader.fieldnames}")
                return [
                    MetricsRow(int(r["epoch"]), r["split"], float(r["loss"]), float(r["top1"]))
                    for r in reader
                ]
        except (OSError, ValueError, KeyError) as e:
            raise StorageError(f"Failed to read metrics log: {e}") from e
