"""Multitask training loop.

Each step runs every configured task on the same batch: occlude, encode the
observed timesteps, merge with the learned latent rows, decode, and score
the encoder and decoder objectives.  The full-trajectory encoding that
supplies triplet targets is computed once per step and shared across tasks;
per-task losses are summed and applied in a single Adam update.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .losses import LossConfig, decoder_loss_grad, encoder_loss_grad, total_loss
from .model import (
    Checkpoint,
    ModelConfig,
    TrajectoryModel,
    save_checkpoint,
    select_learned_slice,
)
from .occlusion import (
    ALL_TASKS,
    OcclusionSpec,
    TaskKind,
    make_occlusion,
    parse_task,
    reorder_merge,
)

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """Raised when a step produces a non-finite loss; no update is applied."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 512
    epochs: int = 30
    max_steps: int | None = None
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    tasks: tuple = ALL_TASKS
    segment_length: int = 6
    grad_clip_norm: float | None = None
    use_hard_negatives: bool = True
    use_soft_negatives: bool = True
    single_task_full_u: bool = False
    stop_gradient_targets: bool = False
    # keypoint columns of the input; None means input_width - 8 (the trailing
    # 8 columns are the bbox corners) or everything when input_width <= 8
    joint_coords: int | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ValueError(f"max_steps must be >= 0, got {self.max_steps}")
        if not self.tasks:
            raise ValueError("tasks must not be empty")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("tasks must not repeat")
        if self.single_task_full_u and len(self.tasks) != 1:
            raise ValueError("single_task_full_u requires exactly one task")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ValueError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.joint_coords is not None and not (
            0 <= self.joint_coords <= self.model.input_width
        ):
            raise ValueError(
                f"joint_coords must lie in [0, {self.model.input_width}], "
                f"got {self.joint_coords}"
            )
        if not self.single_task_full_u:
            for task in self.tasks:
                make_occlusion(task, self.model.window_length, self.segment_length)


@dataclass(frozen=True)
class TaskLosses:
    encoder: float
    joints: float
    bbox: float
    total: float


@dataclass
class TrainState:
    model: TrajectoryModel
    optimizer: "Adam"
    rng: np.random.Generator
    step: int = 0
    last_report: dict | None = None
    loss_sums: dict = field(default_factory=dict)
    loss_count: int = 0

    def record(self, report):
        self.last_report = report
        self.loss_count += 1
        for task, losses in report.items():
            self.loss_sums[task] = self.loss_sums.get(task, 0.0) + losses.total

    def mean_total(self, task) -> float:
        if self.loss_count == 0:
            raise ValueError("no steps recorded yet")
        return self.loss_sums[task] / self.loss_count


class Adam:
    """Adam with bias correction, applied in parameter-registry order."""

    def __init__(self, model: TrajectoryModel, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p) for name, p, _ in model.named_parameters()}
        self.v = {name: np.zeros_like(p) for name, p, _ in model.named_parameters()}

    def step(self, model: TrajectoryModel):
        self.step_count += 1
        corr1 = 1.0 - self.beta1**self.step_count
        corr2 = 1.0 - self.beta2**self.step_count
        for name, p, g in model.named_parameters():
            kernels.adam_update(
                p.reshape(-1), g.reshape(-1),
                self.m[name].reshape(-1), self.v[name].reshape(-1),
                self.learning_rate, self.beta1, self.beta2, self.eps, corr1, corr2,
            )

    def state_dict(self) -> dict:
        return {
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
            "step_count": self.step_count,
        }


def sample_hard_negatives(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform pairing of each batch element with a different one."""
    if batch_size < 2:
        raise ValueError(
            f"hard negatives need a batch of >= 2 trajectories, got {batch_size}"
        )
    offsets = rng.integers(1, batch_size, size=batch_size)
    return (np.arange(batch_size) + offsets) % batch_size


def _stream_columns(cfg: TrainConfig):
    N = cfg.model.input_width
    jc = cfg.joint_coords
    if jc is None:
        jc = N - 8 if N > 8 else N
    return np.arange(jc), np.arange(jc, N)


def _task_occlusion(cfg: TrainConfig, task: TaskKind) -> OcclusionSpec:
    T = cfg.model.window_length
    if cfg.single_task_full_u:
        # the learned tensor stands in for the whole window; the decoder
        # reconstructs from it alone and the triplet runs over every timestep
        return OcclusionSpec(task=task, window_length=T, start=0, stop=T)
    return make_occlusion(task, T, cfg.segment_length)


def _step_core(model, batch, cfg, pairings, rng=None, want_grads=True):
    """Forward (and optionally backward) over all tasks; returns the report."""
    T = cfg.model.window_length
    B = batch.shape[0]
    joint_cols, bbox_cols = _stream_columns(cfg)
    lc = cfg.loss
    track_full = want_grads and not cfg.stop_gradient_targets
    # triplet targets: full-trajectory encoding, shared by all tasks
    z_full, cache_full = model.encode_train(batch, np.arange(T))
    d_z_full = np.zeros_like(z_full) if track_full else None

    report = {}
    for task in cfg.tasks:
        spec = _task_occlusion(cfg, task)
        occ_idx = spec.occluded
        obs_idx = spec.observed
        learned_rows = select_learned_slice(model.learned_latents, spec)
        if obs_idx.size:
            z_obs, cache_obs = model.encode_train(
                np.ascontiguousarray(batch[:, obs_idx, :]), obs_idx, rng
            )
            merged = reorder_merge(z_obs, learned_rows, spec)
        else:
            cache_obs = None
            merged = np.broadcast_to(learned_rows, (B,) + learned_rows.shape).copy()
        pred, cache_dec = model.decode_train(merged, rng)

        pairing = pairings[task]
        z_other = z_full[pairing][:, occ_idx, :]
        enc, d_learned, d_zf, d_other = encoder_loss_grad(
            learned_rows, z_full, z_other, occ_idx, lc.gamma, lc.beta,
            use_soft=cfg.use_soft_negatives, use_hard=cfg.use_hard_negatives,
            want_grads=want_grads,
        )
        loss_j, d_pred_j = decoder_loss_grad(pred, batch, joint_cols, want_grads)
        loss_b, d_pred_b = decoder_loss_grad(pred, batch, bbox_cols, want_grads)
        report[task] = TaskLosses(
            encoder=enc, joints=loss_j, bbox=loss_b,
            total=total_loss(enc, loss_j, loss_b, lc),
        )
        if not want_grads:
            continue
        d_pred = lc.lambda_joints * d_pred_j + lc.lambda_bbox * d_pred_b
        d_merged = model.decode_backward(d_pred, cache_dec)
        model.g_learned_latents[spec.start : spec.stop] += (
            d_merged[:, occ_idx, :].sum(axis=0) + d_learned
        )
        if cache_obs is not None:
            model.encode_backward(
                np.ascontiguousarray(d_merged[:, obs_idx, :]), cache_obs
            )
        if track_full:
            d_z_full += d_zf
            np.add.at(d_z_full, (pairing[:, None], occ_idx[None, :]), d_other)
    if track_full:
        model.encode_backward(d_z_full, cache_full)
    return report


def step_objective(model, batch, cfg, pairings) -> float:
    """Sum of per-task totals for a fixed pairing; no gradients, no dropout."""
    report = _step_core(model, batch, cfg, pairings, rng=None, want_grads=False)
    return sum(r.total for r in report.values())


def step_gradients(model, batch, cfg, pairings):
    """Per-task report plus a copy of every parameter gradient."""
    model.zero_grad()
    report = _step_core(model, batch, cfg, pairings, rng=None, want_grads=True)
    grads = {name: g.copy() for name, _, g in model.named_parameters()}
    return report, grads


def _clip_gradients(model, max_norm: float):
    total = 0.0
    for _, _, g in model.named_parameters():
        total += float((g * g).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for _, _, g in model.named_parameters():
            g *= scale


def train_step(state: TrainState, batch: np.ndarray, cfg: TrainConfig):
    """One accumulative multitask update on a (B, T, N) batch."""
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    if batch.ndim != 3:
        raise ValueError(f"batch must be (B, T, N), got shape {batch.shape}")
    if batch.shape[0] < 2:
        raise ValueError(
            f"training batch must hold >= 2 trajectories, got {batch.shape[0]}"
        )
    pairings = {task: sample_hard_negatives(batch.shape[0], state.rng) for task in cfg.tasks}
    drop_rng = state.rng if cfg.model.dropout > 0 else None
    state.model.zero_grad()
    report = _step_core(state.model, batch, cfg, pairings, drop_rng, want_grads=True)
    for task, losses in report.items():
        if not math.isfinite(losses.total):
            raise TrainingError(
                f"non-finite loss at step {state.step}, task {task.value}: "
                f"encoder={losses.encoder} joints={losses.joints} "
                f"bbox={losses.bbox}; batch min={batch.min()} max={batch.max()}"
            )
    if cfg.grad_clip_norm is not None:
        _clip_gradients(state.model, cfg.grad_clip_norm)
    state.optimizer.step(state.model)
    state.step += 1
    state.record(report)
    return report


def sliding_windows_for_training(
    tracks, cfg: TrainConfig, stride: int = 1, frame_size=(1.0, 1.0),
    visibility_threshold: float = 0.0,
):
    """Cuts normalized training windows from PoseTracks per the model config."""
    from .data import sliding_windows

    windows = []
    for track in tracks:
        windows.extend(
            sliding_windows(
                track, cfg.model.window_length, stride, frame_size,
                visibility_threshold,
            )
        )
    return windows


def _as_points(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        arr = windows
    else:
        arr = np.stack(
            [w.points if hasattr(w, "points") else np.asarray(w) for w in windows]
        )
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"windows must stack to (M, T, N), got shape {arr.shape}")
    return arr


def fit(windows, cfg: TrainConfig, checkpoint_dir=None, log_file=None) -> Checkpoint:
    """Trains a fresh model on the given windows and returns the checkpoint.

    windows: (M, T, N) array or a sequence of Trajectory objects.  With
    max_steps set, epochs repeat until the step target is reached; otherwise
    cfg.epochs full passes run.  Trailing shuffle chunks of size 1 are
    skipped (a batch needs two trajectories for hard negatives).
    """
    pts = _as_points(windows)
    M = len(pts)
    if M < 2:
        raise ValueError(f"need >= 2 training windows, got {M}")
    T, N = cfg.model.window_length, cfg.model.input_width
    if pts.shape[1] != T or pts.shape[2] != N:
        raise ValueError(
            f"windows have shape {pts.shape[1:]}, model expects ({T}, {N})"
        )
    model = TrajectoryModel(cfg.model, seed=cfg.seed)
    optimizer = Adam(model, cfg.learning_rate)
    state = TrainState(
        model=model, optimizer=optimizer, rng=np.random.default_rng([cfg.seed, 1])
    )
    log_fh = open(log_file, "w", encoding="utf-8") if log_file else None
    try:
        if log_fh:
            log_fh.write("# step task encoder joints bbox total\n")
        epoch = 0
        while True:
            if cfg.max_steps is not None:
                if state.step >= cfg.max_steps:
                    break
            elif epoch >= cfg.epochs:
                break
            perm = state.rng.permutation(M)
            for lo in range(0, M, cfg.batch_size):
                if cfg.max_steps is not None and state.step >= cfg.max_steps:
                    break
                idx = perm[lo : lo + cfg.batch_size]
                if len(idx) < 2:
                    continue
                report = train_step(state, pts[idx], cfg)
                if log_fh:
                    for task, losses in report.items():
                        log_fh.write(
                            f"{state.step} {task.value} {losses.encoder:.10g} "
                            f"{losses.joints:.10g} {losses.bbox:.10g} {losses.total:.10g}\n"
                        )
                if state.step % 50 == 0:
                    means = ", ".join(
                        f"{t.value}={state.mean_total(t):.4f}" for t in cfg.tasks
                    )
                    logger.info("step %d mean totals: %s", state.step, means)
                if (
                    checkpoint_dir is not None
                    and cfg.checkpoint_every
                    and state.step % cfg.checkpoint_every == 0
                ):
                    save_checkpoint(
                        model.to_checkpoint(step=state.step, optimizer=optimizer.state_dict()),
                        f"{checkpoint_dir}/checkpoint-{state.step:06d}.bin",
                    )
            epoch += 1
    finally:
        if log_fh:
            log_fh.close()
    return model.to_checkpoint(step=state.step, optimizer=optimizer.state_dict())


# -- training config files -------------------------------------------------

_INT_KEYS = {
    "batch_size", "epochs", "seed", "segment_length", "window_length",
    "input_width", "latent_width", "encoder_layers", "attention_heads",
    "feedforward_width", "checkpoint_every",
}
_OPT_INT_KEYS = {"max_steps", "joint_coords"}
_FLOAT_KEYS = {"learning_rate", "dropout", "beta", "gamma", "lambda_joints", "lambda_bbox"}
_OPT_FLOAT_KEYS = {"grad_clip_norm"}
_BOOL_KEYS = {
    "use_hard_negatives", "use_soft_negatives", "single_task_full_u",
    "stop_gradient_targets",
}
_MODEL_KEYS = {
    "window_length", "input_width", "latent_width", "encoder_layers",
    "attention_heads", "feedforward_width", "dropout",
}
_LOSS_KEYS = {"beta", "gamma", "lambda_joints", "lambda_bbox"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key in _OPT_INT_KEYS or key in _OPT_FLOAT_KEYS:
        if text.lower() in {"", "none"}:
            return None
    if key in _INT_KEYS or key in _OPT_INT_KEYS:
        return int(text)
    if key in _FLOAT_KEYS or key in _OPT_FLOAT_KEYS:
        return float(text)
    if key in _BOOL_KEYS:
        low = text.lower()
        if low in {"1", "true", "yes", "on"}:
            return True
        if low in {"0", "false", "no", "off"}:
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key == "tasks":
        return tuple(parse_task(part) for part in text.split(",") if part.strip())
    raise ValueError(f"unknown training config key {key!r}")


def train_config_from_mapping(mapping: dict) -> TrainConfig:
    """Builds a TrainConfig from flat key/value pairs (strings are coerced)."""
    model_kw = {}
    loss_kw = {}
    train_kw = {}
    for key, raw in mapping.items():
        value = _coerce(key, raw)
        if key in _MODEL_KEYS:
            model_kw[key] = value
        elif key in _LOSS_KEYS:
            loss_kw[key] = value
        else:
            train_kw[key] = value
    return TrainConfig(
        model=ModelConfig(**model_kw), loss=LossConfig(**loss_kw), **train_kw
    )


def _parse_kv_file(path) -> dict:
    """Reads a key = value file (one pair per line, # comments) into a dict."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {line.rstrip()!r}")
            key, _, raw = text.partition("=")
            mapping[key.strip()] = raw.strip()
    return mapping


def load_train_config(path) -> TrainConfig:
    """Parses a key = value config file into a TrainConfig."""
    try:
        return train_config_from_mapping(_parse_kv_file(path))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from exc


def config_to_mapping(cfg: TrainConfig) -> dict:
    """Flat key/value view of a TrainConfig (inverse of train_config_from_mapping)."""
    out = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name in {"model", "loss"}:
            continue
        value = getattr(cfg, f.name)
        if f.name == "tasks":
            value = ",".join(t.value for t in value)
        out[f.name] = value
    for f in dataclasses.fields(ModelConfig):
        out[f.name] = getattr(cfg.model, f.name)
    for f in dataclasses.fields(LossConfig):
        out[f.name] = getattr(cfg.loss, f.name)
    return out
