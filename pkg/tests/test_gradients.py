"""Finite-difference check of the full multitask objective's gradients."""
import numpy as np

from trajanom.losses import TripletBatch, hinge_objective  # noqa: F401 (margin replay)
from trajanom.losses import (
    hard_negative_distance,
    positive_pair,
    soft_negative_penalty,
)
from trajanom.model import ModelConfig, TrajectoryModel, select_learned_slice
from trajanom.occlusion import ALL_TASKS, make_occlusion
from trajanom.trainer import TrainConfig, step_gradients, step_objective

CFG = TrainConfig(
    model=ModelConfig(
        window_length=6, input_width=6, latent_width=8, encoder_layers=2,
        attention_heads=2, feedforward_width=12,
    ),
    segment_length=2,
    seed=0,
)
PAIRING = np.array([1, 0])


def _setup():
    batch = np.random.default_rng(3).uniform(0.0, 1.0, (2, 6, 6))
    model = TrajectoryModel(CFG.model, seed=1)
    pairings = {task: PAIRING for task in ALL_TASKS}
    return model, batch, pairings


def _hinge_margins(model, batch, pairings):
    """P - S - H + gamma per (task, item, occluded step), from eval-mode latents."""
    T = CFG.model.window_length
    z_full = model.encode(batch, np.arange(T)).values
    margins = []
    for task in CFG.tasks:
        spec = make_occlusion(task, T, CFG.segment_length)
        learned = select_learned_slice(model.learned_latents, spec)
        for b in range(batch.shape[0]):
            other = z_full[pairings[task][b]][spec.occluded]
            tb = TripletBatch(
                learned=learned, full_latents=z_full[b], other_latents=other,
                occluded_idx=spec.occluded,
            )
            for i, t_i in enumerate(spec.occluded):
                p = positive_pair(learned[i], z_full[b, int(t_i)])
                s = soft_negative_penalty(tb, i, CFG.loss.beta)
                h = hard_negative_distance(learned[i], other[i])
                margins.append(p - s - h + CFG.loss.gamma)
    return np.asarray(margins)


def test_no_hinge_sits_on_its_kink():
    # guards the sweep below: a 1e-6 parameter nudge moves each margin by
    # far less than this, so central differences never cross max(., 0)
    model, batch, pairings = _setup()
    assert np.abs(_hinge_margins(model, batch, pairings)).min() > 1e-3


def sweep_max_relative_error():
    """Central-difference check over every coordinate of every parameter.

    Returns (worst relative error, its location, coordinates checked).
    """
    model, batch, pairings = _setup()
    _, grads = step_gradients(model, batch, CFG, pairings)

    checked = 0
    worst = 0.0
    worst_at = None
    for name, p, _ in model.named_parameters():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for k in range(flat.size):
            x0 = flat[k]
            h = 1e-6 * max(1.0, abs(x0))
            flat[k] = x0 + h
            up = step_objective(model, batch, CFG, pairings)
            flat[k] = x0 - h
            down = step_objective(model, batch, CFG, pairings)
            flat[k] = x0
            fd = (up - down) / (2.0 * h)
            # the 1e-4 floor turns the check into |a - fd| <= 1e-8 for
            # near-zero gradients (key biases cancel in softmax, so their
            # true gradient is 0 and fd is pure roundoff, ~2e-9)
            denom = max(abs(g[k]), abs(fd), 1e-4)
            rel = abs(g[k] - fd) / denom
            checked += 1
            if rel > worst:
                worst, worst_at = rel, (name, k, g[k], fd)
    return worst, worst_at, checked


def test_analytic_gradients_match_central_differences_everywhere():
    worst, worst_at, checked = sweep_max_relative_error()
    assert checked > 1000
    assert worst <= 1e-4, f"worst relative error {worst} at {worst_at}"
