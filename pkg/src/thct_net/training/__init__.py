"""Loss, optimization, fusion, checkpointing and the training loop."""

from thct_net.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from thct_net.training.fusion import FusionConfig, fusion_sweep, late_fuse
from thct_net.training.loss import cross_entropy_smoothed
from thct_net.training.metrics import ClassificationMetrics, compute_metrics
from thct_net.training.optim import SGDNesterov, TrainConfig, lr_at_epoch, sgd_nesterov_step
from thct_net.training.trainer import EvaluationReport, Trainer, TrainingResult, evaluate, train

__all__ = [
    "Checkpoint",
    "ClassificationMetrics",
    "EvaluationReport",
    "FusionConfig",
    "SGDNesterov",
    "TrainConfig",
    "Trainer",
    "TrainingResult",
    "compute_metrics",
    "cross_entropy_smoothed",
    "evaluate",
    "fusion_sweep",
    "late_fuse",
    "load_checkpoint",
    "lr_at_epoch",
    "save_checkpoint",
    "sgd_nesterov_step",
    "train",
]
