"""Synthetic pedestrian-like tracks with injectable anomalies.

Normal motion is a constant-velocity root plus per-joint sinusoidal gait
offsets (distinct phase per joint and coordinate) plus Gaussian jitter, all
in normalized [0, 1] coordinates with reflection at the boundary.  Each
track lives in its own scene.  Anomalous tracks are identical in kind until
a random onset frame, after which one of:

- velocity_jump: root velocity multiplied by 5
- reversal: root velocity negated
- freeze: the pose of the last pre-onset frame repeats exactly

Frames from the onset onward are labeled 1.
"""
from dataclasses import dataclass

import numpy as np

from .data import FrameLabelSet, PoseTrack, TrackFrame

ANOMALY_KINDS = ("velocity_jump", "reversal", "freeze")
_GAIT_PERIOD = 12.0  # frames per gait cycle
_BBOX_PAD = 0.05  # hull padding, fraction of hull extent
_SPEED_RANGE = (0.004, 0.009)  # root displacement per frame
_AMP_RANGE = (0.005, 0.02)  # gait offset amplitude
_BASE_RANGE = 0.07  # static joint offset from the root


@dataclass(frozen=True)
class SynthConfig:
    n_normal_tracks: int = 200
    n_anomalous_tracks: int = 0
    track_length: int = 40
    n_joints: int = 17
    seed: int = 0
    anomaly_kind: str = "velocity_jump"
    noise_std: float = 0.002

    def __post_init__(self):
        if self.n_normal_tracks < 0 or self.n_anomalous_tracks < 0:
            raise ValueError("track counts must be >= 0")
        if self.track_length < 3:
            raise ValueError(f"track_length must be >= 3, got {self.track_length}")
        if self.n_joints < 1:
            raise ValueError(f"n_joints must be >= 1, got {self.n_joints}")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValueError(
                f"anomaly_kind must be one of {ANOMALY_KINDS}, got {self.anomaly_kind!r}"
            )
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")


def _reflect(x: np.ndarray) -> np.ndarray:
    """Folds real coordinates into [0, 1] by reflection at both edges."""
    return 1.0 - np.abs(np.mod(x, 2.0) - 1.0)


def _bbox_from_joints(joints: np.ndarray) -> np.ndarray:
    """(T, 4, 2) padded axis-aligned hull corners, clipped to [0, 1]."""
    lo = joints.min(axis=1)  # (T, 2)
    hi = joints.max(axis=1)
    pad = _BBOX_PAD * (hi - lo)
    lo_p = np.clip(lo - pad, 0.0, 1.0)
    hi_p = np.clip(hi + pad, 0.0, 1.0)
    corners = np.stack(
        [
            np.stack([lo_p[:, 0], lo_p[:, 1]], axis=1),  # top-left
            np.stack([hi_p[:, 0], lo_p[:, 1]], axis=1),  # top-right
            np.stack([lo_p[:, 0], hi_p[:, 1]], axis=1),  # bottom-left
            np.stack([hi_p[:, 0], hi_p[:, 1]], axis=1),  # bottom-right
        ],
        axis=1,
    )
    return corners


def _one_track(rng, cfg: SynthConfig, anomalous: bool):
    T = cfg.track_length
    J = cfg.n_joints
    start = rng.uniform(0.25, 0.75, size=2)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(*_SPEED_RANGE)
    velocity = speed * np.array([np.cos(angle), np.sin(angle)])
    base = rng.uniform(-_BASE_RANGE, _BASE_RANGE, size=(J, 2))
    amp = rng.uniform(*_AMP_RANGE, size=(J, 2))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(J, 2))
    jitter = rng.normal(0.0, cfg.noise_std, size=(T, J, 2))
    onset = int(rng.integers(max(1, T // 3), (2 * T) // 3 + 1)) if anomalous else None

    steps = np.tile(velocity, (T, 1))
    steps[0] = 0.0
    if anomalous and cfg.anomaly_kind == "velocity_jump":
        steps[onset:] *= 5.0
    elif anomalous and cfg.anomaly_kind == "reversal":
        steps[onset:] *= -1.0
    root = start + np.cumsum(steps, axis=0)  # (T, 2)

    t = np.arange(T, dtype=np.float64)
    gait = amp[None] * np.sin(
        2.0 * np.pi * t[:, None, None] / _GAIT_PERIOD + phase[None]
    )  # (T, J, 2)
    joints = root[:, None, :] + base[None] + gait + jitter
    if anomalous and cfg.anomaly_kind == "freeze":
        joints[onset:] = joints[onset - 1]
    joints = _reflect(joints)
    bbox = _bbox_from_joints(joints)
    return joints, bbox, onset


def generate(cfg: SynthConfig):
    """Returns (tracks, labels): PoseTracks and {scene_id: FrameLabelSet}.

    Normal tracks come first (scenes normal-0000...), then anomalous ones
    (scenes anomaly-0000...).  Coordinates are already normalized, so the
    matching frame size is (1, 1).  Identical configs produce identical
    output.
    """
    rng = np.random.default_rng(cfg.seed)
    tracks = []
    labels = {}
    total = cfg.n_normal_tracks + cfg.n_anomalous_tracks
    for i in range(total):
        anomalous = i >= cfg.n_normal_tracks
        if anomalous:
            scene = f"anomaly-{i - cfg.n_normal_tracks:04d}"
        else:
            scene = f"normal-{i:04d}"
        joints, bbox, onset = _one_track(rng, cfg, anomalous)
        frames = [
            TrackFrame(
                frame_index=t,
                keypoints=joints[t],
                confidence=np.ones(cfg.n_joints),
                bbox=bbox[t],
            )
            for t in range(cfg.track_length)
        ]
        tracks.append(PoseTrack(scene_id=scene, track_id=0, frames=frames))
        marks = {
            t: int(anomalous and t >= onset) for t in range(cfg.track_length)
        }
        labels[scene] = FrameLabelSet(scene_id=scene, labels=marks)
    return tracks, labels
