"""Anomaly scoring and ROC-AUC evaluation.

A window's anomaly evidence is the reconstruction error of its occluded
frames only, measured over visible coordinates.  Every evaluated window
contributes its per-frame errors to the video frames it covers; a frame's
score aggregates its contributions (max by default) and frames no window
reaches score 0.  AUC is the probability that a random anomalous frame
outscores a random normal one, ties counted half.
"""
from dataclasses import dataclass, field

import numpy as np

from .data import FrameLabelSet, Trajectory, sliding_windows
from .model import Checkpoint, TrajectoryModel, select_learned_slice
from .occlusion import ALL_TASKS, OcclusionSpec, make_occlusion, reorder_merge

_AGGREGATIONS = ("max", "mean")


@dataclass(frozen=True)
class EvalConfig:
    tasks: tuple = ALL_TASKS
    segment_length: int = 6
    stride: int = 1
    aggregation: str = "max"
    smoothing: int = 0
    normalize_per_scene: bool = False
    batch_size: int = 256

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("tasks must not be empty")
        if self.segment_length < 1:
            raise ValueError(f"segment_length must be >= 1, got {self.segment_length}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.aggregation not in _AGGREGATIONS:
            raise ValueError(
                f"aggregation must be one of {_AGGREGATIONS}, got {self.aggregation!r}"
            )
        if self.smoothing < 0:
            raise ValueError(f"smoothing must be >= 0, got {self.smoothing}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class ScoredFrame:
    scene_id: str
    frame_index: int
    score: float
    label: int | None = None


@dataclass
class EvalResult:
    auc_by_task: dict = field(default_factory=dict)
    frames_by_task: dict = field(default_factory=dict)


def _coord_mask(visibility: np.ndarray) -> np.ndarray:
    """Expands per-point visibility (..., N/2) to per-coordinate (..., N)."""
    return np.repeat(visibility, 2, axis=-1)


def _masked_frame_norms(diff: np.ndarray, coord_mask) -> np.ndarray:
    """Euclidean norm over the last axis, restricted to unmasked coordinates."""
    sq = diff * diff
    if coord_mask is not None:
        sq = np.where(coord_mask, sq, 0.0)
    return np.sqrt(sq.sum(axis=-1))


def segment_error(
    pred: np.ndarray, target: np.ndarray, spec: OcclusionSpec, visibility=None
) -> np.ndarray:
    """Per-frame reconstruction error of the occluded run of one window.

    pred, target: (T, N); visibility: optional (T, N/2) flags.  Returns (L,)
    errors in occluded-run order.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.shape[0] != spec.window_length:
        raise ValueError(
            f"window covers {pred.shape[0]} steps, spec expects {spec.window_length}"
        )
    mask = None if visibility is None else _coord_mask(np.asarray(visibility, dtype=bool))
    norms = _masked_frame_norms(pred - target, mask)
    return norms[spec.occluded]


def frame_scores(contributions, labels, cfg: EvalConfig) -> list:
    """Aggregates (scene_id, frame_index, error) contributions into frame scores.

    With labels ({scene_id: FrameLabelSet}), every labeled frame appears in
    the output (score 0 without contributions) and an unlabeled contribution
    is an error.  With labels=None only contributed frames appear, unlabeled.
    """
    agg = {}
    for scene, frame, error in contributions:
        key = (scene, int(frame))
        error = float(error)
        if key not in agg:
            agg[key] = [error, 1]
        elif cfg.aggregation == "max":
            if error > agg[key][0]:
                agg[key][0] = error
        else:
            agg[key][0] += error
            agg[key][1] += 1

    def score_of(key):
        if key not in agg:
            return 0.0
        total, count = agg[key]
        return total / count if cfg.aggregation == "mean" else total

    if labels is None:
        keys = sorted(agg)
        frames = [
            ScoredFrame(scene_id=s, frame_index=f, score=score_of((s, f)), label=None)
            for s, f in keys
        ]
    else:
        for scene, frame in agg:
            if scene not in labels or frame not in labels[scene].labels:
                raise ValueError(
                    f"no label for scene {scene!r} frame {frame} "
                    "but a window contributed to it"
                )
        frames = []
        for scene in sorted(labels):
            label_set = labels[scene]
            for frame in sorted(label_set.labels):
                frames.append(
                    ScoredFrame(
                        scene_id=scene, frame_index=frame,
                        score=score_of((scene, frame)),
                        label=int(label_set.labels[frame]),
                    )
                )
    if cfg.smoothing > 1 or cfg.normalize_per_scene:
        frames = _postprocess_per_scene(frames, cfg)
    return frames


def _postprocess_per_scene(frames, cfg: EvalConfig):
    out = []
    by_scene = {}
    for fr in frames:
        by_scene.setdefault(fr.scene_id, []).append(fr)
    for scene in sorted(by_scene):
        group = sorted(by_scene[scene], key=lambda fr: fr.frame_index)
        scores = np.asarray([fr.score for fr in group])
        if cfg.smoothing > 1:
            scores = _moving_average(scores, cfg.smoothing)
        if cfg.normalize_per_scene:
            lo, hi = scores.min(), scores.max()
            scores = (scores - lo) / (hi - lo) if hi > lo else np.zeros_like(scores)
        out.extend(
            ScoredFrame(fr.scene_id, fr.frame_index, float(s), fr.label)
            for fr, s in zip(group, scores)
        )
    return out


def _moving_average(scores: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average with truncated edges, in frame-sorted order."""
    n = len(scores)
    half = width // 2
    csum = np.concatenate([[0.0], np.cumsum(scores)])
    idx = np.arange(n)
    lo = np.maximum(0, idx - half)
    hi = np.minimum(n, idx + half + 1)
    return (csum[hi] - csum[lo]) / (hi - lo)


def compute_auc(frames) -> float:
    """ROC-AUC of scores against labels via tied ranks (ties count half)."""
    scores = np.asarray([fr.score for fr in frames], dtype=np.float64)
    labels = np.asarray([fr.label for fr in frames])
    if any(l is None for l in labels.tolist()):
        raise ValueError("every scored frame needs a label to compute AUC")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"AUC undefined: need both classes, got {n_pos} anomalous and "
            f"{n_neg} normal frames"
        )
    order = np.argsort(scores, kind="mergesort")
    _, inverse, counts = np.unique(scores[order], return_inverse=True, return_counts=True)
    before = np.concatenate([[0], np.cumsum(counts)[:-1]])
    avg_rank = before + (counts + 1) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = avg_rank[inverse]
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _as_windows(dataset, window_length, cfg, frame_size, visibility_threshold):
    if dataset and isinstance(dataset[0], Trajectory):
        return list(dataset)
    windows = []
    for track in dataset:
        windows.extend(
            sliding_windows(
                track, window_length, cfg.stride, frame_size, visibility_threshold
            )
        )
    return windows


def window_errors(model: TrajectoryModel, windows, spec: OcclusionSpec, batch_size=256):
    """Occluded-frame errors for each window; yields (scene, frame, error) triples."""
    pts = np.stack([w.points for w in windows]).astype(np.float64)
    vis = np.stack([w.visibility for w in windows])
    obs_idx = spec.observed
    occ_idx = spec.occluded
    learned_rows = select_learned_slice(model.learned_latents, spec)
    out = []
    for lo in range(0, len(windows), batch_size):
        chunk = slice(lo, lo + batch_size)
        batch = np.ascontiguousarray(pts[chunk])
        z_obs = model.encode(
            np.ascontiguousarray(batch[:, obs_idx, :]), obs_idx
        ).values
        merged = reorder_merge(z_obs, learned_rows, spec)
        pred = model.decode(merged)
        mask = _coord_mask(vis[chunk])
        norms = _masked_frame_norms(pred - batch, mask)  # (B, T)
        errors = norms[:, occ_idx]
        for row, window in zip(errors, windows[lo : lo + batch_size]):
            first = window.first_frame
            for pos, t in enumerate(occ_idx):
                out.append((window.scene_id, first + int(t), float(row[pos])))
    return out


def evaluate(
    checkpoint,
    dataset,
    labels,
    cfg: EvalConfig,
    frame_size=(1.0, 1.0),
    visibility_threshold: float = 0.0,
) -> EvalResult:
    """Scores a dataset with a trained model and computes per-task AUC.

    checkpoint: Checkpoint or TrajectoryModel.  dataset: PoseTracks (windows
    are cut here with cfg.stride) or ready Trajectory windows.  labels:
    {scene_id: FrameLabelSet} covering every contributed frame, or None to
    skip AUC and return unlabeled scores.
    """
    model = (
        TrajectoryModel.from_checkpoint(checkpoint)
        if isinstance(checkpoint, Checkpoint)
        else checkpoint
    )
    T = model.config.window_length
    windows = _as_windows(dataset, T, cfg, frame_size, visibility_threshold)
    if not windows:
        raise ValueError("no windows to evaluate (tracks shorter than the window?)")
    N = model.config.input_width
    if windows[0].points.shape != (T, N):
        raise ValueError(
            f"windows have shape {windows[0].points.shape}, "
            f"model expects ({T}, {N})"
        )
    result = EvalResult()
    for task in cfg.tasks:
        spec = make_occlusion(task, T, cfg.segment_length)
        contributions = window_errors(model, windows, spec, cfg.batch_size)
        frames = frame_scores(contributions, labels, cfg)
        result.frames_by_task[task] = frames
        if labels is not None:
            result.auc_by_task[task] = compute_auc(frames)
    return result


def write_scores(frames, path):
    """One line per frame: scene_id, frame_index, score[, label]."""
    with open(path, "w", encoding="utf-8") as fh:
        for fr in frames:
            line = f"{fr.scene_id},{fr.frame_index},{repr(fr.score)}"
            if fr.label is not None:
                line += f",{fr.label}"
            fh.write(line + "\n")
