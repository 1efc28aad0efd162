"""
Training Loop Module

Seeded epoch loop over a two-stream model: shuffle, permute entities for
the Transformer input, sum both streams' smoothed cross-entropy, backward,
Nesterov step. Validation runs after every epoch and drives best-checkpoint
selection.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from thct_net.config import ModelConfig
from thct_net.data.loader import BatchLoader, PreparedSplit, batch_bounds
from thct_net.data.skeleton import DatasetSplit
from thct_net.exceptions import DataError, NumericalError, StorageError
from thct_net.models.thct import THCTNet
from thct_net.storage.metrics_log import MetricsLog
from thct_net.tensor.core import Tensor, no_grad
from thct_net.training.checkpoint import Checkpoint, save_checkpoint
from thct_net.training.fusion import SWEEP_WEIGHTS, FusionConfig, fusion_sweep, late_fuse
from thct_net.training.loss import cross_entropy_smoothed
from thct_net.training.metrics import ClassificationMetrics, compute_metrics
from thct_net.training.optim import SGDNesterov, lr_at_epoch


logger = logging.getLogger(__name__)

INITIAL_CHECKPOINT = "initial.ckpt"
LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"
CONFIG_FILENAME = "config.txt"


def split_generators(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (initialization, training) generators derived from one seed."""
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(train_seq)


def build_model(config: ModelConfig) -> THCTNet:
    init_rng, _ = split_generators(config.seed)
    return THCTNet(config, init_rng)


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

@dataclass
class EvaluationReport:
    """Fused and per-stream results on one split, in sample order."""
    fused: ClassificationMetrics
    transformer: ClassificationMetrics
    cnn: ClassificationMetrics
    loss: float
    transformer_logits: np.ndarray
    cnn_logits: np.ndarray
    labels: np.ndarray
    fusion: FusionConfig = field(default_factory=FusionConfig)

    @property
    def top1(self) -> float:
        return self.fused.top1

    def fused_scores(self) -> np.ndarray:
        return late_fuse(self.transformer_logits, self.cnn_logits, self.fusion)

    def sweep(self, weights: Sequence[float] = SWEEP_WEIGHTS) -> List[Tuple[float, float]]:
        return fusion_sweep(
            self.transformer_logits, self.cnn_logits, self.labels, self.fusion.space, weights
        )


def _forward_chunk(model: THCTNet, prepared: PreparedSplit, start: int, stop: int):
    batch = prepared.batch(np.arange(start, stop))
    with no_grad():
        logits = model(Tensor(batch.coords), Tensor(batch.motion))
    return logits.transformer.numpy(), logits.cnn.numpy()


def evaluate(
    model: THCTNet,
    prepared: PreparedSplit,
    config: ModelConfig,
    workers: int = 1,
) -> EvaluationReport:
    """
    Score a split in original entity order with BatchNorm running statistics.

    With workers > 1 the batches are scored on a thread pool; results are
    concatenated in sample order, so the report does not depend on workers.

    Raises:
        DataError: If the split is empty.
    """
    if len(prepared) == 0:
        raise DataError(f"Cannot evaluate an empty {prepared.role} split")
    bounds = batch_bounds(len(prepared), config.batch_size)
    was_training = model.training
    model.eval()
    try:
        if workers > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda b: _forward_chunk(model, prepared, *b), bounds))
        else:
            parts = [_forward_chunk(model, prepared, *b) for b in bounds]
    finally:
        model.train(was_training)

    scores_t = np.concatenate([p[0] for p in parts])
    scores_c = np.concatenate([p[1] for p in parts])
    labels = np.asarray(prepared.labels)
    with no_grad():
        loss = (
            cross_entropy_smoothed(Tensor(scores_t), labels, config.label_smoothing, config.temperature).item()
            + cross_entropy_smoothed(Tensor(scores_c), labels, config.label_smoothing, config.temperature).item()
        )

    fusion = config.fusion_config()
    fused = late_fuse(scores_t, scores_c, fusion)
    k = prepared.num_classes
    return EvaluationReport(
        fused=compute_metrics(fused.argmax(axis=-1), labels, k),
        transformer=compute_metrics(scores_t.argmax(axis=-1), labels, k),
        cnn=compute_metrics(scores_c.argmax(axis=-1), labels, k),
        loss=float(loss),
        transformer_logits=scores_t,
        cnn_logits=scores_c,
        labels=labels,
        fusion=fusion,
    )


# ----------------------------------------------------------------------
# Training
# ----------------------------------------------------------------------

@dataclass
class EpochRecord:
    """Summary of one completed epoch (epochs count from 1)."""
    epoch: int
    lr: float
    train_loss: float
    train_top1: float
    val_loss: float
    val_top1: float
    improved: bool


@dataclass
class TrainingResult:
    records: List[EpochRecord]
    best_top1: float
    best_epoch: int
    final_report: Optional[EvaluationReport]
    out_dir: Optional[Path] = None

    @property
    def train_losses(self) -> List[float]:
        return [r.train_loss for r in self.records]


class Trainer:
    """
    Owns the model, optimizer and training generator for one run.

    Everything that influences the next epoch (parameters, BatchNorm
    statistics, velocities, generator state, epoch counter, best accuracy)
    is captured by `checkpoint()` and restored by `restore()`.
    """

    def __init__(
        self,
        config: ModelConfig,
        train_split: DatasetSplit,
        val_split: DatasetSplit,
        out_dir: Optional[Union[str, Path]] = None,
        workers: int = 1,
        model: Optional[THCTNet] = None,
    ):
        if len(train_split) == 0:
            raise DataError("Training split is empty")
        if len(train_split) < 2:
            raise DataError("Training needs at least 2 samples for batch statistics")
        if len(val_split) == 0:
            raise DataError("Validation split is empty")

        self.config = config
        self.train_config = config.train_config()
        self.workers = workers
        self.out_dir = Path(out_dir) if out_dir is not None else None

        init_rng, self.rng = split_generators(config.seed)
        self.model = model if model is not None else THCTNet(config, init_rng)
        self.optimizer = SGDNesterov(list(self.model.named_parameters()), self.train_config.momentum)

        self.train_data = PreparedSplit.from_config(train_split, config)
        self.val_data = PreparedSplit.from_config(val_split, config)
        self.loader = BatchLoader(
            self.train_data, config.batch_size, shuffle=True,
            rng=self.rng, permutation_mode=config.permutation_mode,
        )
        self.epoch = 0
        self.best_top1 = -1.0
        self.best_epoch = 0
        self._metrics: Optional[MetricsLog] = None
        logger.info(
            f"Trainer ready: {len(self.train_data)} train / {len(self.val_data)} val samples, "
            f"{len(self.loader)} batches per epoch"
        )

    # -- state ----------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config,
            model_state=self.model.state_dict(),
            velocity=self.optimizer.state_dict(),
            epoch=self.epoch,
            rng_state=self.rng.bit_generator.state,
            best_top1=self.best_top1,
            best_epoch=self.best_epoch,
        )

    def restore(self, ckpt: Checkpoint) -> None:
        """
        Continue from a saved state.

        Raises:
            CheckpointMismatchError: If the checkpoint tensors do not fit the model.
        """
        self.model.load_state_dict(ckpt.model_state)
        self.optimizer.load_state_dict(ckpt.velocity)
        if ckpt.rng_state:
            self.rng.bit_generator.state = ckpt.rng_state
        self.epoch = ckpt.epoch
        self.best_top1 = ckpt.best_top1
        self.best_epoch = ckpt.best_epoch
        logger.info(
            f"Restored checkpoint at epoch {ckpt.epoch} "
            f"(best top-1 {ckpt.best_top1:.4f} at epoch {ckpt.best_epoch})"
        )

    # -- files ----------------------------------------------------------

    def _open_outputs(self) -> None:
        if self.out_dir is None:
            return
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / CONFIG_FILENAME).write_text(self.config.to_text(), encoding="utf-8")
        except OSError as e:
            raise StorageError(f"Cannot write to output directory {self.out_dir}: {e}") from e
        fresh = self.epoch == 0
        self._metrics = MetricsLog(self.out_dir / MetricsLog.FILENAME, truncate=fresh)
        if fresh:
            save_checkpoint(self.out_dir / INITIAL_CHECKPOINT, self.checkpoint())
        else:
            self._metrics.truncate_after(self.epoch)

    def _save(self, name: str) -> None:
        if self.out_dir is not None:
            path = save_checkpoint(self.out_dir / name, self.checkpoint())
            logger.info(f"Wrote {path}")

    # -- loop -----------------------------------------------------------

    def train_epoch(self) -> Tuple[float, float]:
        """One pass over the training split; returns (mean loss, fused top-1) over samples."""
        cfg = self.train_config
        lr = lr_at_epoch(cfg, self.epoch)
        self.model.train()
        total = 0.0
        correct = 0
        fusion = self.config.fusion_config()
        for index, batch in enumerate(self.loader):
            self.optimizer.zero_grad()
            logits = self.model(
                Tensor(batch.coords), Tensor(batch.motion), Tensor(batch.transformer_coords)
            )
            loss_t = cross_entropy_smoothed(logits.transformer, batch.labels, cfg.label_smoothing, cfg.temperature)
            loss_c = cross_entropy_smoothed(logits.cnn, batch.labels, cfg.label_smoothing, cfg.temperature)
            loss = loss_t + loss_c
            value = loss.item()
            if not np.isfinite(value):
                ids = [self.train_data.source_ids[i] for i in batch.indices[:5]]
                raise NumericalError(
                    f"Non-finite loss at epoch {self.epoch + 1}, batch {index}: "
                    f"transformer={loss_t.item()}, cnn={loss_c.item()}, lr={lr}, "
                    f"samples={ids}"
                )
            loss.backward()
            self.optimizer.step(lr)
            total += value * len(batch)
            fused = late_fuse(logits.transformer.numpy(), logits.cnn.numpy(), fusion)
            correct += int(np.sum(fused.argmax(axis=-1) == batch.labels))
            logger.debug(f"epoch {self.epoch + 1} batch {index}: loss {value:.6f}")
        n = len(self.train_data)
        return total / n, correct / n

    def fit(self, on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainingResult:
        self._open_outputs()
        records: List[EpochRecord] = []
        report = None
        while self.epoch < self.train_config.epochs:
            lr = lr_at_epoch(self.train_config, self.epoch)
            train_loss, train_top1 = self.train_epoch()
            report = evaluate(self.model, self.val_data, self.config, self.workers)
            self.epoch += 1

            improved = report.top1 > self.best_top1
            if improved:
                self.best_top1 = report.top1
                self.best_epoch = self.epoch
            record = EpochRecord(self.epoch, lr, train_loss, train_top1, report.loss, report.top1, improved)
            records.append(record)

            if self._metrics is not None:
                self._metrics.append(self.epoch, "train", train_loss, train_top1)
                self._metrics.append(self.epoch, "val", report.loss, report.top1)
            if improved:
                self._save(BEST_CHECKPOINT)
            self._save(LAST_CHECKPOINT)

            logger.info(
                f"Epoch {self.epoch}/{self.train_config.epochs}: lr {lr:g}, train loss {train_loss:.4f}, "
                f"val loss {report.loss:.4f}, val top-1 {report.top1:.4f}"
                + (" (best)" if improved else "")
            )
            if on_epoch is not None:
                on_epoch(record)

        return TrainingResult(records, self.best_top1, self.best_epoch, report, self.out_dir)


def train(
    model: Optional[THCTNet],
    train_split: DatasetSplit,
    val_split: DatasetSplit,
    config: ModelConfig,
    out_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Checkpoint] = None,
    workers: int = 1,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainingResult:
    """
    Train `model` (or a freshly seeded one when None) for config.epochs.

    Raises:
        DataError: If a split is empty.
        NumericalError: If the loss becomes NaN or Inf.
    """
    trainer = Trainer(config, train_split, val_split, out_dir, workers, model)
    if resume is not None:
        trainer.restore(resume)
    return trainer.fit(on_epoch)
