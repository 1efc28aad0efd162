"""
Command-Line Interface

Subcommands:
    gen-data  Generate (or ingest) train/val dataset caches.
    train     Train the two-stream model, writing checkpoints and metrics.csv.
    eval      Score a checkpoint on a split, optionally sweeping the fusion weight.
    verify    Kernel oracles, gradient checks and structural checks.

Exit codes: 0 success, 1 usage or configuration error, 2 data, checkpoint
or storage error, 3 numerical failure or failed verification.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from thct_net.config import VALID_PRESETS, ModelConfig
from thct_net.data.baseline import nearest_neighbor_accuracy
from thct_net.data.cache import read_split, split_path, write_split
from thct_net.data.loader import PreparedSplit
from thct_net.data.ntu import VALID_PROTOCOLS, load_ntu_directory
from thct_net.data.skeleton import DatasetSplit
from thct_net.data.synthetic import generate_synthetic_splits
from thct_net.exceptions import (
    ConfigurationError,
    DegenerateBatchError,
    GradientError,
    NumericalError,
    THCTError,
    UsageError,
)
from thct_net.models.thct import THCTNet
from thct_net.tensor.ops import OP_KINDS
from thct_net.training.checkpoint import load_checkpoint
from thct_net.training.trainer import BEST_CHECKPOINT, EpochRecord, EvaluationReport, evaluate, train
from thct_net.verify import SuiteResult, run_verification


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# flag dest -> ModelConfig field
FLAG_FIELDS = {
    "seed": "seed",
    "data": "data_dir",
    "out": "out_dir",
    "epochs": "epochs",
    "lr": "lr",
    "batch": "batch_size",
    "window": "window",
    "fusion_weight": "fusion_weight",
    "classes": "num_classes",
    "per_class": "per_class",
    "noise": "noise",
    "frames": "frames",
    "workers": "workers",
}


class CLIParser(argparse.ArgumentParser):
    """ArgumentParser that reports bad usage as UsageError instead of exiting with 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _common_options() -> argparse.ArgumentParser:
    common = CLIParser(add_help=False)
    group = common.add_argument_group("configuration")
    group.add_argument("--config", type=str, default=None, help="Config file of 'key = value' lines")
    group.add_argument("--preset", choices=VALID_PRESETS, default=None,
                       help="Start from the full-size or micro model (default: full)")
    group.add_argument("--seed", type=int, default=None, help="Random seed")
    group.add_argument("--data", type=str, default=None, help="Dataset cache directory")
    group.add_argument("--out", type=str, default=None, help="Output directory")
    group.add_argument("--epochs", type=positive_int, default=None, help="Training epochs")
    group.add_argument("--lr", type=float, default=None, help="Initial learning rate")
    group.add_argument("--batch", type=positive_int, default=None, help="Batch size")
    group.add_argument("--window", type=str, default=None, help="Token window T,V,M (e.g. 20,1,2)")
    group.add_argument("--fusion-weight", type=float, default=None,
                       help="Weight of the Transformer scores in late fusion")
    group.add_argument("--classes", type=positive_int, default=None, help="Number of classes")
    group.add_argument("--per-class", type=positive_int, default=None,
                       help="Training samples per class (gen-data)")
    group.add_argument("--noise", type=float, default=None, help="Synthetic coordinate noise")
    group.add_argument("--frames", type=positive_int, default=None, help="Frames per sequence")
    group.add_argument("--workers", type=positive_int, default=None, help="Evaluation threads")
    return common


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser for CLI."""
    common = _common_options()
    parser = CLIParser(
        prog="thct-net",
        description="Two-stream Transformer/CNN skeleton interaction recognition",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  thct-net gen-data --classes 4 --per-class 50 --seed 7 --data data
  thct-net train --preset micro --data data --out runs/micro
  thct-net eval --preset micro --data data --out runs/micro --sweep-fusion
  thct-net verify
  thct-net verify --inject-fault matmul     Negative control (must fail)

Settings layer as: preset -> THCT_* environment (.env) -> --config file -> flags.
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    gen = subparsers.add_parser("gen-data", parents=[common], help="Write train/val dataset caches")
    gen.add_argument("--ntu-dir", type=str, default=None,
                     help="Ingest NTU .skeleton files from this directory instead of generating")
    gen.add_argument("--protocol", choices=VALID_PROTOCOLS, default="xsub",
                     help="NTU train/val protocol (default: xsub)")

    tr = subparsers.add_parser("train", parents=[common], help="Train the two-stream model")
    tr.add_argument("--resume", type=str, default=None, help="Continue from a checkpoint (e.g. last.ckpt)")

    ev = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=str, default=None,
                    help=f"Checkpoint file (default: <out>/{BEST_CHECKPOINT})")
    ev.add_argument("--split", choices=["train", "val"], default="val", help="Split to score")
    ev.add_argument("--sweep-fusion", action="store_true", help="Print accuracy for w = 0, 0.1, ..., 1")

    ver = subparsers.add_parser("verify", parents=[common], help="Run oracle and gradient checks")
    ver.add_argument("--inject-fault", type=str, default=None, metavar="OP",
                     help=f"Corrupt one backward rule: {', '.join(OP_KINDS)}")
    return parser


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

def flag_overrides(parsed: argparse.Namespace) -> Dict[str, Any]:
    return {
        field: getattr(parsed, dest)
        for dest, field in FLAG_FIELDS.items()
        if getattr(parsed, dest, None) is not None
    }


def _finish(config: ModelConfig) -> ModelConfig:
    for warning in config.validate():
        print(f"[Config] Warning: {warning}")
        logger.warning(warning)
    return config


def resolve_config(parsed: argparse.Namespace, base: Optional[ModelConfig] = None) -> ModelConfig:
    """
    Effective configuration for a command.

    Without `base` the layers are preset, environment, config file, flags.
    With `base` (a checkpoint's embedded config) only flags are applied.
    """
    if base is None:
        base = ModelConfig.preset(parsed.preset) if parsed.preset else ModelConfig()
        base = ModelConfig.from_env(base)
        if parsed.config:
            base = ModelConfig.from_file(parsed.config, base)
    config = base.with_overrides(flag_overrides(parsed), source="command line")
    return _finish(config)


def echo_config(config: ModelConfig) -> None:
    window = ",".join(str(w) for w in config.window)
    print(
        f"[Config] lr={config.lr} momentum={config.momentum} batch={config.batch_size} "
        f"epochs={config.epochs} window={window} fusion_weight={config.fusion_weight} "
        f"seed={config.seed} precision={config.precision}"
    )
    logger.info("Effective configuration:\n" + config.to_text())


def _match_classes(config: ModelConfig, split: DatasetSplit, explicit: bool) -> ModelConfig:
    if split.num_classes == config.num_classes:
        return config
    if explicit:
        raise ConfigurationError(
            f"--classes {config.num_classes} does not match the dataset's {split.num_classes} classes"
        )
    print(f"[Config] num_classes = {split.num_classes} (from dataset)")
    return replace(config, num_classes=split.num_classes)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def _print_counts(split: DatasetSplit) -> None:
    counts = ", ".join(f"{name}={n}" for name, n in split.class_counts().items())
    print(f"[Data] {split.role}: {len(split)} samples ({counts})")


def cmd_gen_data(parsed: argparse.Namespace) -> int:
    config = resolve_config(parsed)
    out_dir = Path(parsed.out) if parsed.out else Path(config.data_dir)

    if parsed.ntu_dir:
        print(f"[Data] Reading NTU skeletons from {parsed.ntu_dir} ({parsed.protocol})")
        train_split, val_split = load_ntu_directory(
            parsed.ntu_dir, frames=config.frames, entities=config.entities, protocol=parsed.protocol
        )
    else:
        print(f"[Data] Generating {config.num_classes} classes x {config.per_class} "
              f"(noise {config.noise}, seed {config.seed})")
        train_split, val_split = generate_synthetic_splits(
            config.num_classes, config.per_class, config.val_fraction,
            config.noise, config.seed, config.frames,
        )

    for split in (train_split, val_split):
        path = write_split(split_path(out_dir, split.role), split)
        _print_counts(split)
        print(f"[Data] Wrote {path}")

    if len(train_split) and len(val_split):
        baseline = nearest_neighbor_accuracy(train_split, val_split)
        print(f"[Data] 1-NN baseline accuracy on val: {baseline:.4f}")
    return EXIT_OK


def _load_splits(config: ModelConfig):
    train_split = read_split(split_path(config.data_dir, "train"))
    val_split = read_split(split_path(config.data_dir, "val"))
    return train_split, val_split


def cmd_train(parsed: argparse.Namespace) -> int:
    resume = None
    if parsed.resume:
        resume = load_checkpoint(parsed.resume)
        print(f"[Train] Resuming from {parsed.resume} after epoch {resume.epoch}")
        config = resolve_config(parsed, base=resume.config)
    else:
        config = resolve_config(parsed)

    train_split, val_split = _load_splits(config)
    config = _match_classes(config, train_split, explicit=parsed.classes is not None)
    echo_config(config)
    _print_counts(train_split)
    _print_counts(val_split)

    def on_epoch(record: EpochRecord) -> None:
        marker = "  *best" if record.improved else ""
        print(
            f"[Train] epoch {record.epoch:>3}/{config.epochs}  lr {record.lr:<8g} "
            f"loss {record.train_loss:.4f}  val loss {record.val_loss:.4f}  "
            f"val top-1 {record.val_top1:.4f}{marker}"
        )

    result = train(None, train_split, val_split, config, out_dir=config.out_dir,
                   resume=resume, workers=config.workers, on_epoch=on_epoch)
    print(f"[Train] Best val top-1 {result.best_top1:.4f} at epoch {result.best_epoch}")
    print(f"[Train] Outputs in {config.out_dir}")
    return EXIT_OK


def print_report(report: EvaluationReport, class_names: List[str], sweep: bool) -> None:
    print(f"[Eval] Fused top-1:       {report.fused.top1:.4f} "
          f"(w={report.fusion.weight}, {report.fusion.space})")
    print(f"[Eval] Transformer top-1: {report.transformer.top1:.4f}")
    print(f"[Eval] CNN top-1:         {report.cnn.top1:.4f}")
    print(f"[Eval] Loss:              {report.loss:.4f}")
    print("[Eval] Per-class accuracy:")
    for name, acc in zip(class_names, report.fused.per_class):
        print(f"         {name:<12} {acc:.4f}")
    print("[Eval] Confusion (rows true, columns predicted):")
    print(report.fused.format_confusion(class_names))
    if sweep:
        print("[Eval] Fusion sweep (w = Transformer weight):")
        for w, acc in report.sweep():
            print(f"         w={w:.1f}  top-1 {acc:.4f}")


def cmd_eval(parsed: argparse.Namespace) -> int:
    out_dir = parsed.out
    if parsed.checkpoint:
        ckpt_path = Path(parsed.checkpoint)
    else:
        ckpt_path = Path(out_dir if out_dir else resolve_config(parsed).out_dir) / BEST_CHECKPOINT
    ckpt = load_checkpoint(ckpt_path)
    config = resolve_config(parsed, base=ckpt.config)

    model = THCTNet(config)
    model.load_state_dict(ckpt.model_state)
    split = read_split(split_path(config.data_dir, parsed.split))
    print(f"[Eval] {ckpt_path} (epoch {ckpt.epoch}) on {parsed.split}: {len(split)} samples")

    report = evaluate(model, PreparedSplit.from_config(split, config), config, config.workers)
    print_report(report, split.class_names, parsed.sweep_fusion)
    return EXIT_OK


def cmd_verify(parsed: argparse.Namespace) -> int:
    seed = parsed.seed if parsed.seed is not None else 0
    if parsed.inject_fault:
        print(f"[Verify] Injecting a fault into the backward rule of '{parsed.inject_fault}'")

    def progress(result: SuiteResult) -> None:
        print(f"[Verify] {result.format()}")

    report = run_verification(seed=seed, fault=parsed.inject_fault, progress=progress)
    if report.passed:
        print(f"[Verify] All {len(report.results)} suites passed")
        return EXIT_OK
    failed = ", ".join(r.name for r in report.failures())
    print(f"[Verify] FAILED {len(report.failures())}/{len(report.results)} suites: {failed}")
    if report.fault:
        print(f"[Verify] Backward rule of '{report.fault}' is incorrect")
    return EXIT_NUMERIC


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
}


def exit_code_for(error: THCTError) -> int:
    if isinstance(error, (UsageError, ConfigurationError)):
        return EXIT_USAGE
    if isinstance(error, (NumericalError, GradientError, DegenerateBatchError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(args: Optional[list] = None) -> int:
    """
    Main entry point for the CLI.

    Args:
        args: Command line arguments (uses sys.argv if None)

    Returns:
        Exit code
    """
    parser = create_parser()
    try:
        parsed = parser.parse_args(args)
        if not parsed.command:
            parser.print_help()
            return EXIT_USAGE
        logger.info(f"thct-net {parsed.command} starting")
        return COMMANDS[parsed.command](parsed)
    except UsageError as e:
        parser.print_usage()
        print(f"[Error] {e}")
        return EXIT_USAGE
    except THCTError as e:
        print(f"[Error] {e}")
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)
