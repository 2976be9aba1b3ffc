"""Command-line interface.

Subcommands: gen-synth, train, evaluate, score, inspect-checkpoint.
Exit codes: 0 success, 1 usage error, 2 data error.
Set TRAJANOM_LOG=DEBUG|INFO|WARNING to control verbosity.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from .data import (
    ParseError,
    load_frame_labels,
    load_pose_tracks,
    save_frame_labels,
    save_pose_tracks,
)
from .model import load_checkpoint, save_checkpoint
from .occlusion import parse_task
from .scoring import EvalConfig, evaluate, write_scores
from .synthetic import ANOMALY_KINDS, SynthConfig, generate
from .trainer import (
    TrainingError,
    _parse_kv_file,
    fit,
    sliding_windows_for_training,
    train_config_from_mapping,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures routed to exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="trajanom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-normal", type=int, default=200)
    p.add_argument("--n-anomalous", type=int, default=0)
    p.add_argument("--track-length", type=int, default=40)
    p.add_argument("--joints", type=int, default=17)
    p.add_argument("--anomaly-kind", choices=ANOMALY_KINDS, default="velocity_jump")
    p.add_argument("--noise-std", type=float, default=0.002)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="pose-track file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key = value training config file")
    for flag, kind in (
        ("--window-length", int), ("--segment-length", int), ("--batch-size", int),
        ("--epochs", int), ("--max-steps", int), ("--seed", int),
        ("--latent-width", int), ("--encoder-layers", int),
        ("--attention-heads", int), ("--feedforward-width", int),
        ("--checkpoint-every", int), ("--joint-coords", int),
        ("--learning-rate", float), ("--dropout", float), ("--beta", float),
        ("--gamma", float), ("--lambda-joints", float), ("--lambda-bbox", float),
        ("--grad-clip-norm", float),
    ):
        p.add_argument(flag, type=kind, default=None)
    p.add_argument("--tasks", default=None,
                   help="comma list from future,present,past")
    p.add_argument("--no-hard-negatives", action="store_true")
    p.add_argument("--no-soft-negatives", action="store_true")
    p.add_argument("--single-task-full-u", action="store_true")
    p.add_argument("--stop-gradient-targets", action="store_true")
    p.add_argument("--stride", type=int, default=1, help="window stride over tracks")
    p.add_argument("--frame-size", type=float, nargs=2, default=(1.0, 1.0),
                   metavar=("W", "H"))
    p.add_argument("--visibility-threshold", type=float, default=0.0)

    for name in ("evaluate", "score"):
        p = sub.add_parser(name, help="score frames" if name == "score"
                           else "score frames and report per-task AUC")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True, help="pose-track file")
        if name == "evaluate":
            p.add_argument("--labels", required=True, help="frame-label file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--tasks", default="future,present,past")
        p.add_argument("--eval-segment-length", type=int, default=6)
        p.add_argument("--stride", type=int, default=1)
        p.add_argument("--aggregation", choices=("max", "mean"), default="max")
        p.add_argument("--smoothing", type=int, default=0)
        p.add_argument("--normalize-per-scene", action="store_true")
        p.add_argument("--batch-size", type=int, default=256)
        p.add_argument("--frame-size", type=float, nargs=2, default=(1.0, 1.0),
                       metavar=("W", "H"))
        p.add_argument("--visibility-threshold", type=float, default=0.0)

    p = sub.add_parser("inspect-checkpoint", help="print checkpoint metadata")
    p.add_argument("--checkpoint", required=True)
    return parser


def _cmd_gen_synth(args) -> int:
    cfg = SynthConfig(
        n_normal_tracks=args.n_normal, n_anomalous_tracks=args.n_anomalous,
        track_length=args.track_length, n_joints=args.joints, seed=args.seed,
        anomaly_kind=args.anomaly_kind, noise_std=args.noise_std,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracks, labels = generate(cfg)
    save_pose_tracks(tracks, out / "tracks.csv")
    save_frame_labels(labels, out / "labels.csv")
    print(f"wrote {len(tracks)} tracks to {out / 'tracks.csv'}")
    print(f"wrote labels to {out / 'labels.csv'}")
    return 0


def _train_mapping(args) -> dict:
    mapping = {}
    if args.config:
        mapping.update(_parse_kv_file(args.config))
    overrides = {
        "window_length": args.window_length, "segment_length": args.segment_length,
        "batch_size": args.batch_size, "epochs": args.epochs,
        "max_steps": args.max_steps, "seed": args.seed,
        "latent_width": args.latent_width, "encoder_layers": args.encoder_layers,
        "attention_heads": args.attention_heads,
        "feedforward_width": args.feedforward_width,
        "checkpoint_every": args.checkpoint_every, "joint_coords": args.joint_coords,
        "learning_rate": args.learning_rate, "dropout": args.dropout,
        "beta": args.beta, "gamma": args.gamma,
        "lambda_joints": args.lambda_joints, "lambda_bbox": args.lambda_bbox,
        "grad_clip_norm": args.grad_clip_norm, "tasks": args.tasks,
    }
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_hard_negatives:
        mapping["use_hard_negatives"] = False
    if args.no_soft_negatives:
        mapping["use_soft_negatives"] = False
    if args.single_task_full_u:
        mapping["single_task_full_u"] = True
    if args.stop_gradient_targets:
        mapping["stop_gradient_targets"] = True
    return mapping


def _cmd_train(args) -> int:
    try:
        cfg = train_config_from_mapping(_train_mapping(args))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    tracks = load_pose_tracks(args.data)
    windows = sliding_windows_for_training(
        tracks, cfg, stride=args.stride, frame_size=tuple(args.frame_size),
        visibility_threshold=args.visibility_threshold,
    )
    if len(windows) < 2:
        raise DataError(
            f"{args.data}: needs at least 2 windows of length "
            f"{cfg.model.window_length}, got {len(windows)}"
        )
    logger.info("training on %d windows from %d tracks", len(windows), len(tracks))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = fit(
        windows, cfg, checkpoint_dir=str(out), log_file=str(out / "train_log.txt")
    )
    save_checkpoint(checkpoint, out / "checkpoint.bin")
    print(f"trained {checkpoint.step} steps; wrote {out / 'checkpoint.bin'}")
    return 0


def _parse_tasks(text: str):
    tasks = tuple(parse_task(part) for part in text.split(",") if part.strip())
    if not tasks:
        raise UsageError("--tasks must name at least one task")
    return tasks


def _eval_config(args) -> EvalConfig:
    try:
        return EvalConfig(
            tasks=_parse_tasks(args.tasks),
            segment_length=args.eval_segment_length,
            stride=args.stride, aggregation=args.aggregation,
            smoothing=args.smoothing,
            normalize_per_scene=args.normalize_per_scene,
            batch_size=args.batch_size,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _cmd_evaluate(args, with_labels: bool) -> int:
    cfg = _eval_config(args)
    checkpoint = load_checkpoint(args.checkpoint)
    tracks = load_pose_tracks(args.data)
    labels = load_frame_labels(args.labels) if with_labels else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = evaluate(
        checkpoint, tracks, labels, cfg,
        frame_size=tuple(args.frame_size),
        visibility_threshold=args.visibility_threshold,
    )
    for task, frames in result.frames_by_task.items():
        path = out / f"scores_{task.value}.csv"
        write_scores(frames, path)
        logger.info("wrote %s", path)
    if with_labels:
        print(f"{'task':<10}auc")
        for task in cfg.tasks:
            print(f"{task.value:<10}{result.auc_by_task[task]:.6f}")
    else:
        print(f"wrote scores for {len(cfg.tasks)} task(s) to {out}")
    return 0


def _cmd_inspect(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    print(f"step: {checkpoint.step}")
    print(f"seed: {checkpoint.seed}")
    for name, value in sorted(vars(checkpoint.config).items()):
        print(f"config.{name}: {value}")
    total = 0
    for name, arr in checkpoint.parameters.items():
        print(f"param {name}: shape {tuple(arr.shape)}")
        total += arr.size
    print(f"total parameters: {total}")
    if checkpoint.optimizer is not None:
        print(f"optimizer: adam, step_count {checkpoint.optimizer['step_count']}")
    return 0


def run(argv) -> int:
    """Parses argv (without the program name) and runs; returns the exit code."""
    level = os.environ.get("TRAJANOM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if args.command == "gen-synth":
            return _cmd_gen_synth(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args, with_labels=True)
        if args.command == "score":
            return _cmd_evaluate(args, with_labels=False)
        if args.command == "inspect-checkpoint":
            return _cmd_inspect(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, DataError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
