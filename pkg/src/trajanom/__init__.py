"""Skeleton-trajectory anomaly detection by occluded-segment reconstruction."""

from .data import (
    FrameLabelSet,
    ParseError,
    PoseTrack,
    TrackFrame,
    Trajectory,
    load_frame_labels,
    load_pose_tracks,
    normalize_frames,
    save_frame_labels,
    save_pose_tracks,
    sliding_windows,
)
from .losses import (
    LossConfig,
    TripletBatch,
    decoder_loss,
    encoder_loss,
    hard_negative_distance,
    hinge_objective,
    positive_pair,
    soft_negative_penalty,
    temporal_regularizer,
    total_loss,
)
from .model import (
    Checkpoint,
    LatentSequence,
    ModelConfig,
    TrajectoryModel,
    load_checkpoint,
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
from .scoring import (
    EvalConfig,
    EvalResult,
    ScoredFrame,
    compute_auc,
    evaluate,
    frame_scores,
    segment_error,
    write_scores,
)
from .synthetic import ANOMALY_KINDS, SynthConfig, generate
from .trainer import (
    Adam,
    TaskLosses,
    TrainConfig,
    TrainState,
    TrainingError,
    fit,
    load_train_config,
    sample_hard_negatives,
    train_step,
)

__version__ = "0.1.0"
