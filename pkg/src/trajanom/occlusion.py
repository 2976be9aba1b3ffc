"""Occluded-segment bookkeeping for the three reconstruction tasks.

A window of length T is split into an observed part and one contiguous
occluded run.  The future task hides the last L steps, the past task the
first L, and the present task a centered run of L steps.  Indices are
0-based and the run is stored half-open as [start, stop).
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np


class TaskKind(str, Enum):
    PAST = "past"
    PRESENT = "present"
    FUTURE = "future"


ALL_TASKS = (TaskKind.FUTURE, TaskKind.PRESENT, TaskKind.PAST)


def parse_task(text: str) -> TaskKind:
    try:
        return TaskKind(text.strip().lower())
    except ValueError:
        raise ValueError(
            f"unknown task {text!r}; expected one of "
            + ", ".join(t.value for t in TaskKind)
        ) from None


@dataclass(frozen=True)
class OcclusionSpec:
    """One contiguous occluded run [start, stop) inside a window of length T."""

    task: TaskKind
    window_length: int
    start: int
    stop: int

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError(f"window_length must be >= 1, got {self.window_length}")
        if not (0 <= self.start <= self.stop <= self.window_length):
            raise ValueError(
                f"invalid occluded run [{self.start}, {self.stop}) "
                f"for window length {self.window_length}"
            )

    @property
    def n_occluded(self) -> int:
        return self.stop - self.start

    @property
    def occluded(self) -> np.ndarray:
        """Indices of the hidden timesteps."""
        return np.arange(self.start, self.stop)

    @property
    def observed(self) -> np.ndarray:
        """Indices of the visible timesteps, in increasing order."""
        return np.concatenate(
            [np.arange(0, self.start), np.arange(self.stop, self.window_length)]
        )


def make_occlusion(task: TaskKind, window_length: int, segment_length: int) -> OcclusionSpec:
    """Place the occluded run for a task.

    The present task needs at least one observed step on each side, so its
    segment_length is capped at window_length - 2; the other tasks allow up
    to window_length - 1.
    """
    T, L = window_length, segment_length
    if L < 1:
        raise ValueError(f"segment_length must be >= 1, got {L}")
    if task is TaskKind.PRESENT:
        if L > T - 2:
            raise ValueError(
                f"present task needs segment_length <= window_length - 2 "
                f"(got L={L}, T={T})"
            )
        start = (T - L) // 2
    else:
        if L > T - 1:
            raise ValueError(
                f"segment_length must be <= window_length - 1 (got L={L}, T={T})"
            )
        start = T - L if task is TaskKind.FUTURE else 0
    return OcclusionSpec(task=task, window_length=T, start=start, stop=start + L)


def reorder_merge(observed_latents: np.ndarray, learned: np.ndarray, spec: OcclusionSpec) -> np.ndarray:
    """Assemble the full latent sequence from observed latents and the learned slice.

    observed_latents has the observed timesteps in increasing time order,
    shape (..., T - L, C); learned covers the occluded run, shape (L, C) or
    (..., L, C).  Output shape is (..., T, C) with every timestep in place.
    """
    T = spec.window_length
    L = spec.n_occluded
    if observed_latents.shape[-2] != T - L:
        raise ValueError(
            f"observed latents cover {observed_latents.shape[-2]} steps, "
            f"expected {T - L} for window length {T} with {L} occluded"
        )
    if learned.shape[-2] != L:
        raise ValueError(
            f"learned slice covers {learned.shape[-2]} steps, expected {L}"
        )
    if L and observed_latents.shape[-1] != learned.shape[-1]:
        raise ValueError(
            f"latent width mismatch: {observed_latents.shape[-1]} vs {learned.shape[-1]}"
        )
    lead = observed_latents.shape[:-2]
    out = np.empty(lead + (T, observed_latents.shape[-1]), dtype=np.float64)
    out[..., spec.observed, :] = observed_latents
    out[..., spec.occluded, :] = learned
    return out
