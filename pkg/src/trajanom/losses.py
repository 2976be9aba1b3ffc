"""Training objectives.

The encoder objective is a hinge over triplets anchored at the learned
latents that stand in for occluded timesteps: each anchor is pulled toward
the latent of its own trajectory at the same timestep (positive), pushed
past the temporally down-weighted latents of the other occluded timesteps
(soft negatives), and pushed past the latent of a different trajectory at
the same timestep (hard negative).  The decoder objective is the mean
per-frame euclidean reconstruction error, split into a keypoint stream and
a bounding-box stream with separate weights.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossConfig:
    """Objective weights: margin, temporal scale, and stream weights."""

    beta: float = 0.001
    gamma: float = 0.1
    lambda_joints: float = 5.0
    lambda_bbox: float = 3.0

    def __post_init__(self):
        for name in ("beta", "gamma", "lambda_joints", "lambda_bbox"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class TripletBatch:
    """Per-trajectory inputs to the encoder objective.

    learned: (L, C) rows of the learned tensor covering the occluded run.
    full_latents: (T, C) encoding of the complete trajectory.
    other_latents: (L, C) encoding of a different trajectory at the same
        occluded timesteps (the hard negatives).
    occluded_idx: (L,) timestep indices of the occluded run.
    """

    learned: np.ndarray
    full_latents: np.ndarray
    other_latents: np.ndarray
    occluded_idx: np.ndarray

    def __post_init__(self):
        L = len(self.occluded_idx)
        if self.learned.shape[0] != L or self.other_latents.shape[0] != L:
            raise ValueError("learned and other_latents must have one row per occluded step")
        if self.learned.shape[-1] != self.full_latents.shape[-1]:
            raise ValueError("latent width mismatch between learned and full_latents")
        if np.any(self.occluded_idx < 0) or np.any(
            self.occluded_idx >= self.full_latents.shape[0]
        ):
            raise ValueError("occluded_idx out of range for full_latents")


def positive_pair(anchor: np.ndarray, target: np.ndarray) -> float:
    """Euclidean distance between an anchor and its same-trajectory latent."""
    return float(np.linalg.norm(anchor - target))


def hard_negative_distance(anchor: np.ndarray, foreign: np.ndarray) -> float:
    """Euclidean distance to the other trajectory's latent at the same step."""
    return float(np.linalg.norm(anchor - foreign))


def temporal_regularizer(t_i: int, t_j: int, occluded_idx, beta: float) -> float:
    """Weight beta * |t_i - t_j| / max_k |t_i - t_k| over the occluded run.

    Zero at t_j == t_i, beta exactly when t_j is a farthest occluded step
    from t_i.  Undefined for a single-step run (the max is zero).
    """
    occluded_idx = np.asarray(occluded_idx)
    denom = np.abs(int(t_i) - occluded_idx).max()
    if denom == 0:
        raise ValueError("temporal regularizer needs an occluded run of length >= 2")
    return beta * abs(int(t_i) - int(t_j)) / float(denom)


def regularizer_matrix(occluded_idx, beta: float) -> np.ndarray:
    """(L, L) matrix of temporal_regularizer values, rows indexed by anchor."""
    t = np.asarray(occluded_idx, dtype=np.float64)
    dist = np.abs(t[:, None] - t[None, :])
    denom = dist.max(axis=1)
    if np.any(denom == 0):
        raise ValueError("temporal regularizer needs an occluded run of length >= 2")
    return beta * dist / denom[:, None]


def soft_negative_penalty(batch: TripletBatch, position: int, beta: float) -> float:
    """Temporally weighted sum of distances to the other occluded latents.

    position indexes into the occluded run.  Returns 0 for a run of length 1.
    """
    L = len(batch.occluded_idx)
    if L < 2:
        return 0.0
    anchor = batch.learned[position]
    t_i = int(batch.occluded_idx[position])
    total = 0.0
    for j in range(L):
        t_j = int(batch.occluded_idx[j])
        weight = temporal_regularizer(t_i, t_j, batch.occluded_idx, beta)
        total += weight * float(
            np.linalg.norm(anchor - batch.full_latents[t_j])
        )
    return total


def hinge_objective(positives, softs, hards, gamma: float) -> float:
    """Sum over anchors of max(positive - soft - hard + gamma, 0)."""
    margin = (
        np.asarray(positives, dtype=np.float64)
        - np.asarray(softs, dtype=np.float64)
        - np.asarray(hards, dtype=np.float64)
        + gamma
    )
    return float(np.maximum(margin, 0.0).sum())


def encoder_loss(
    batch: TripletBatch,
    gamma: float,
    beta: float,
    use_soft: bool = True,
    use_hard: bool = True,
) -> float:
    """Hinge objective over every occluded timestep of one trajectory."""
    L = len(batch.occluded_idx)
    positives = np.empty(L)
    softs = np.zeros(L)
    hards = np.zeros(L)
    for i in range(L):
        t_i = int(batch.occluded_idx[i])
        positives[i] = positive_pair(batch.learned[i], batch.full_latents[t_i])
        if use_soft:
            softs[i] = soft_negative_penalty(batch, i, beta)
        if use_hard:
            hards[i] = hard_negative_distance(batch.learned[i], batch.other_latents[i])
    return hinge_objective(positives, softs, hards, gamma)


def decoder_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over frames of the euclidean norm of the reconstruction residual."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.linalg.norm(pred - target, axis=-1).mean())


def total_loss(
    encoder_term: float, joints_term: float, bbox_term: float, config: LossConfig
) -> float:
    """Encoder objective plus stream-weighted decoder objectives."""
    return (
        encoder_term
        + config.lambda_joints * joints_term
        + config.lambda_bbox * bbox_term
    )


def _safe_unit(diff: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """diff / norm with a zero (the chosen subgradient) where the norm is zero."""
    return np.divide(
        diff, norm[..., None], out=np.zeros_like(diff), where=norm[..., None] > 0
    )


def encoder_loss_grad(
    learned: np.ndarray,
    full: np.ndarray,
    other: np.ndarray,
    occluded_idx: np.ndarray,
    gamma: float,
    beta: float,
    use_soft: bool = True,
    use_hard: bool = True,
    want_grads: bool = True,
):
    """Batch-mean encoder objective and its gradients.

    learned: (L, C) shared learned rows; full: (B, T, C) full-trajectory
    latents; other: (B, L, C) hard negatives.  Returns
    (loss, d_learned, d_full, d_other); the gradient triple is None when
    want_grads is false.  Gradients are of the mean over the batch.
    """
    B = full.shape[0]
    L = len(occluded_idx)
    occ = full[:, occluded_idx, :]
    diff_pos = learned[None, :, :] - occ
    pnorm = np.linalg.norm(diff_pos, axis=2)

    use_soft = use_soft and L > 1
    if use_soft:
        reg = regularizer_matrix(occluded_idx, beta)
        diff_soft = learned[None, :, None, :] - occ[:, None, :, :]
        snorm = np.linalg.norm(diff_soft, axis=3)
        soft = (reg[None, :, :] * snorm).sum(axis=2)
    else:
        soft = 0.0
    if use_hard:
        diff_hard = learned[None, :, :] - other
        hnorm = np.linalg.norm(diff_hard, axis=2)
    else:
        hnorm = 0.0

    margin = pnorm - soft - hnorm + gamma
    active = margin > 0.0
    loss = float(np.where(active, margin, 0.0).sum(axis=1).mean())
    if not want_grads:
        return loss, None, None, None

    scale = active / float(B)
    d_learned = np.einsum("bl,blc->lc", scale, _safe_unit(diff_pos, pnorm))
    d_occ = -scale[:, :, None] * _safe_unit(diff_pos, pnorm)
    d_other = np.zeros_like(other)
    if use_soft:
        coef = scale[:, :, None] * reg[None, :, :]
        unit_soft = _safe_unit(diff_soft, snorm)
        d_learned -= np.einsum("bij,bijc->ic", coef, unit_soft)
        d_occ += np.einsum("bij,bijc->bjc", coef, unit_soft)
    if use_hard:
        unit_hard = _safe_unit(diff_hard, hnorm)
        d_learned -= np.einsum("bl,blc->lc", scale, unit_hard)
        d_other = scale[:, :, None] * unit_hard
    d_full = np.zeros_like(full)
    d_full[:, occluded_idx, :] = d_occ
    return loss, d_learned, d_full, d_other


def decoder_loss_grad(pred: np.ndarray, target: np.ndarray, cols: np.ndarray, want_grads: bool = True):
    """Batch-mean reconstruction error over one column stream and its gradient.

    pred, target: (B, T, N); cols: indices of the stream's columns.
    Returns (loss, d_pred) with d_pred full (B, T, N) shape, zero outside cols.
    """
    if len(cols) == 0:
        return 0.0, (np.zeros_like(pred) if want_grads else None)
    B, T = pred.shape[0], pred.shape[1]
    sub = pred[:, :, cols] - target[:, :, cols]
    norms = np.linalg.norm(sub, axis=2)
    loss = float(norms.sum(axis=1).mean() / T)
    if not want_grads:
        return loss, None
    d_pred = np.zeros_like(pred)
    d_pred[:, :, cols] = _safe_unit(sub, norms) / (T * B)
    return loss, d_pred
