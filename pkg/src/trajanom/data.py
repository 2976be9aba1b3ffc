"""Pose-track files, frame labels, sliding windows, and normalization.

A pose-track file holds one frame of one person per line: scene_id,
track_id, frame_index, J keypoint triples (x, y, confidence), then the four
bbox corner pairs (top-left, top-right, bottom-left, bottom-right), all in
pixels.  Lines are comma-separated; a line starting with '{' is instead
parsed as a JSON object with keys scene_id, track_id, frame_index,
keypoints, bbox.  A frame-label file holds scene_id, frame_index, label
(0 or 1) per line.

Model input rows are flattened [x0, y0, x1, y1, ...] normalized coordinates:
J keypoints followed by the 4 bbox corners, so width N = 2 * (J + 4).
"""
import json
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    """Malformed input data; carries file path and line number."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass
class TrackFrame:
    """One person in one frame, pixel coordinates."""

    frame_index: int
    keypoints: np.ndarray  # (J, 2)
    confidence: np.ndarray  # (J,)
    bbox: np.ndarray  # (4, 2) corners: TL, TR, BL, BR


@dataclass
class PoseTrack:
    """All frames of one person in one scene, sorted by frame index."""

    scene_id: str
    track_id: int
    frames: list = field(default_factory=list)

    @property
    def n_joints(self) -> int:
        return 0 if not self.frames else len(self.frames[0].keypoints)


@dataclass
class FrameLabelSet:
    """Per-frame anomaly labels (0 normal, 1 anomalous) for one scene."""

    scene_id: str
    labels: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    """One normalized window ready for the model.

    points: (T, N) in [0, 1] frame-relative coordinates, keypoints then bbox
    corners, xy interleaved.  visibility: (T, N // 2) flags, one per point
    (bbox corners are always visible).  Invisible keypoint coordinates are
    filled, not measured.
    """

    points: np.ndarray
    visibility: np.ndarray
    scene_id: str
    track_id: int
    first_frame: int
    frame_size: tuple = (1.0, 1.0)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.visibility = np.ascontiguousarray(self.visibility, dtype=bool)
        T, N = self.points.shape
        if N % 2 != 0:
            raise ValueError(f"input width must be even, got {N}")
        if self.visibility.shape != (T, N // 2):
            raise ValueError(
                f"visibility shape {self.visibility.shape} does not match "
                f"points shape {self.points.shape}"
            )

    @property
    def window_length(self) -> int:
        return self.points.shape[0]

    @property
    def n_joints(self) -> int:
        return self.points.shape[1] // 2 - 4

    @property
    def frame_indices(self) -> np.ndarray:
        return self.first_frame + np.arange(self.window_length)

    def to_pixels(self) -> np.ndarray:
        """Denormalized (T, N) pixel coordinates."""
        return denormalize_points(self.points, self.frame_size)


def denormalize_points(points: np.ndarray, frame_size) -> np.ndarray:
    w, h = frame_size
    scale = np.tile([w, h], points.shape[-1] // 2)
    return points * scale


# -- file I/O ---------------------------------------------------------------

def _parse_track_line(path, lineno, line):
    text = line.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
            scene = str(obj["scene_id"])
            track = int(obj["track_id"])
            frame = int(obj["frame_index"])
            kp = np.asarray(obj["keypoints"], dtype=np.float64).reshape(-1, 3)
            bbox = np.asarray(obj["bbox"], dtype=np.float64).reshape(4, 2)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ParseError(path, lineno, f"bad JSON record: {exc}") from exc
        return scene, track, TrackFrame(
            frame_index=frame, keypoints=kp[:, :2].copy(),
            confidence=kp[:, 2].copy(), bbox=bbox,
        )
    fields = text.split(",")
    if len(fields) < 14 or (len(fields) - 11) % 3 != 0:
        raise ParseError(
            path, lineno,
            f"expected 3 + 3*J + 8 comma-separated fields, got {len(fields)}",
        )
    n_joints = (len(fields) - 11) // 3
    try:
        scene = fields[0].strip()
        track = int(fields[1])
        frame = int(fields[2])
        values = np.asarray([float(v) for v in fields[3:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(path, lineno, f"bad numeric field: {exc}") from exc
    triples = values[: 3 * n_joints].reshape(n_joints, 3)
    bbox = values[3 * n_joints :].reshape(4, 2)
    return scene, track, TrackFrame(
        frame_index=frame, keypoints=triples[:, :2].copy(),
        confidence=triples[:, 2].copy(), bbox=bbox,
    )


def load_pose_tracks(path) -> list:
    """Reads a pose-track file; returns PoseTracks in first-appearance order."""
    tracks = {}
    seen = set()
    n_joints = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            scene, track_id, frame = _parse_track_line(path, lineno, line)
            if n_joints is None:
                n_joints = len(frame.keypoints)
            elif len(frame.keypoints) != n_joints:
                raise ParseError(
                    path, lineno,
                    f"joint count changed from {n_joints} to {len(frame.keypoints)}",
                )
            key = (scene, track_id, frame.frame_index)
            if key in seen:
                raise ParseError(
                    path, lineno,
                    f"duplicate frame {frame.frame_index} for scene {scene!r} "
                    f"track {track_id}",
                )
            seen.add(key)
            tracks.setdefault((scene, track_id), PoseTrack(scene, track_id)).frames.append(frame)
    for track in tracks.values():
        track.frames.sort(key=lambda f: f.frame_index)
    return list(tracks.values())


def save_pose_tracks(tracks, path):
    """Writes the comma-separated pose-track format (repr floats, stable bytes)."""
    with open(path, "w", encoding="utf-8") as fh:
        for track in tracks:
            if "," in track.scene_id:
                raise ValueError(f"scene_id {track.scene_id!r} must not contain commas")
            for frame in track.frames:
                parts = [track.scene_id, str(track.track_id), str(frame.frame_index)]
                for (x, y), c in zip(frame.keypoints, frame.confidence):
                    parts += [repr(float(x)), repr(float(y)), repr(float(c))]
                for x, y in frame.bbox:
                    parts += [repr(float(x)), repr(float(y))]
                fh.write(",".join(parts) + "\n")


def load_frame_labels(path) -> dict:
    """Reads a frame-label file into {scene_id: FrameLabelSet}."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            fields = text.split(",")
            if len(fields) != 3:
                raise ParseError(
                    path, lineno, f"expected scene_id,frame_index,label, got {text!r}"
                )
            scene = fields[0].strip()
            try:
                frame = int(fields[1])
                label = int(fields[2])
            except ValueError as exc:
                raise ParseError(path, lineno, f"bad numeric field: {exc}") from exc
            if label not in (0, 1):
                raise ParseError(path, lineno, f"label must be 0 or 1, got {label}")
            labels = out.setdefault(scene, FrameLabelSet(scene))
            if frame in labels.labels:
                raise ParseError(
                    path, lineno, f"duplicate label for scene {scene!r} frame {frame}"
                )
            labels.labels[frame] = label
    return out


def save_frame_labels(labels: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        for scene in labels:
            label_set = labels[scene]
            for frame in sorted(label_set.labels):
                fh.write(f"{label_set.scene_id},{frame},{label_set.labels[frame]}\n")


# -- normalization and windows ---------------------------------------------

def normalize_frames(
    frames, scene_id, track_id, frame_size=(1.0, 1.0), visibility_threshold=0.0
) -> Trajectory:
    """Builds a normalized Trajectory from consecutive TrackFrames.

    Coordinates divide by frame size.  Keypoints with confidence below the
    threshold count as invisible; their coordinates are filled by linear
    interpolation over time from the visible frames of the same keypoint
    (held constant past the ends), or by the bbox center when the keypoint
    is never visible.
    """
    T = len(frames)
    if T < 1:
        raise ValueError("need at least one frame")
    w, h = frame_size
    if w <= 0 or h <= 0:
        raise ValueError(f"frame size must be positive, got {frame_size}")
    kp = np.stack([f.keypoints for f in frames]).astype(np.float64)  # (T, J, 2)
    conf = np.stack([f.confidence for f in frames]).astype(np.float64)  # (T, J)
    bbox = np.stack([f.bbox for f in frames]).astype(np.float64)  # (T, 4, 2)
    J = kp.shape[1]
    size = np.asarray([w, h], dtype=np.float64)
    kp /= size
    bbox /= size
    visible = conf >= visibility_threshold  # (T, J)
    center = bbox.mean(axis=1)  # (T, 2)
    t_all = np.arange(T, dtype=np.float64)
    for j in range(J):
        vis = visible[:, j]
        if vis.all():
            continue
        if not vis.any():
            kp[:, j, :] = center
            continue
        t_vis = t_all[vis]
        for axis in range(2):
            kp[~vis, j, axis] = np.interp(t_all[~vis], t_vis, kp[vis, j, axis])
    points = np.concatenate([kp.reshape(T, 2 * J), bbox.reshape(T, 8)], axis=1)
    visibility = np.concatenate([visible, np.ones((T, 4), dtype=bool)], axis=1)
    return Trajectory(
        points=points, visibility=visibility, scene_id=scene_id,
        track_id=track_id, first_frame=frames[0].frame_index, frame_size=(w, h),
    )


def sliding_windows(
    track: PoseTrack,
    window_length: int,
    stride: int = 1,
    frame_size=(1.0, 1.0),
    visibility_threshold: float = 0.0,
) -> list:
    """All length-T windows over runs of consecutive frame indices.

    The stride restarts at the beginning of each consecutive run.  A track
    shorter than the window yields no windows.
    """
    if window_length < 1:
        raise ValueError(f"window_length must be >= 1, got {window_length}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = track.frames
    out = []
    if len(frames) < window_length:
        return out
    indices = np.asarray([f.frame_index for f in frames])
    run_start = 0
    for i in range(1, len(frames) + 1):
        if i == len(frames) or indices[i] != indices[i - 1] + 1:
            run_len = i - run_start
            for off in range(run_start, run_start + run_len - window_length + 1, stride):
                out.append(
                    normalize_frames(
                        frames[off : off + window_length],
                        track.scene_id, track.track_id,
                        frame_size, visibility_threshold,
                    )
                )
            run_start = i
    return out
