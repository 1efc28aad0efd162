"""Classification metrics."""

from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass
class ClassificationMetrics:
    """
    Attributes:
        top1: Overall accuracy (trace(confusion) / total).
        per_class: Accuracy per true class; NaN for classes with no samples.
        confusion: (K, K) counts, rows are true classes, columns predictions.
    """
    top1: float
    per_class: np.ndarray
    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def format_confusion(self, class_names: List[str]) -> str:
        width = max(6, max(len(n) for n in class_names) + 1)
        header = " " * width + "".join(f"{n[:width - 1]:>{width}}" for n in class_names)
        rows = [header]
        for name, row in zip(class_names, self.confusion):
            rows.append(f"{name[:width - 1]:<{width}}" + "".join(f"{int(c):>{width}}" for c in row))
        return "\n".join(rows)


def compute_metrics(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> ClassificationMetrics:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, np.diag(confusion) / np.maximum(counts, 1), np.nan)
    top1 = float(np.trace(confusion) / max(len(labels), 1))
    return ClassificationMetrics(top1=top1, per_class=per_class, confusion=confusion)
