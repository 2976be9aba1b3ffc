"""Times the compiled kernels against the numpy fallback.

Runs itself twice: once as-is (native extension if built) and once in a
subprocess with TRAJANOM_NO_EXT=1, then prints both columns side by side.

    python3 benchmarks/bench_backends.py [--repeats 200]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(max(3, repeats // 50)):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def run_benchmarks(repeats: int) -> dict:
    from trajanom import kernels
    from trajanom.model import ModelConfig, TrajectoryModel
    from trajanom.occlusion import ALL_TASKS
    from trajanom.trainer import TrainConfig, sample_hard_negatives, step_gradients

    rng = np.random.default_rng(0)
    B, T, C = 64, 18, 64
    logits = rng.standard_normal((B * 4 * T, T))
    probs = kernels.softmax(logits)
    d_probs = rng.standard_normal(probs.shape)
    x = rng.standard_normal((B * T, C))
    gamma = rng.standard_normal(C)
    beta = rng.standard_normal(C)
    _, xhat, inv_std = kernels.layer_norm(x, gamma, beta, 1e-5)
    dy = rng.standard_normal(x.shape)
    p = rng.standard_normal(200_000)
    g = rng.standard_normal(p.size)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    cfg = TrainConfig(
        model=ModelConfig(latent_width=C, encoder_layers=2, attention_heads=4,
                          feedforward_width=128),
        segment_length=6, batch_size=B,
    )
    model = TrajectoryModel(cfg.model, seed=0)
    batch = rng.uniform(0, 1, (B, T, cfg.model.input_width))
    pairings = {
        task: sample_hard_negatives(B, np.random.default_rng(i))
        for i, task in enumerate(ALL_TASKS)
    }

    return {
        "backend": kernels.backend_name(),
        "softmax": _time(lambda: kernels.softmax(logits), repeats),
        "softmax_backward": _time(
            lambda: kernels.softmax_backward(probs, d_probs), repeats
        ),
        "layer_norm": _time(lambda: kernels.layer_norm(x, gamma, beta, 1e-5), repeats),
        "layer_norm_backward": _time(
            lambda: kernels.layer_norm_backward(dy, xhat, inv_std, gamma), repeats
        ),
        "adam_update": _time(
            lambda: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.5, 0.5),
            repeats,
        ),
        "train_step": _time(
            lambda: step_gradients(model, batch, cfg, pairings), max(3, repeats // 40)
        ),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--emit-json", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    results = run_benchmarks(args.repeats)
    if args.emit_json:
        print(json.dumps(results))
        return

    env = dict(os.environ, TRAJANOM_NO_EXT="1")
    child = subprocess.run(
        [sys.executable, os.path.abspath(__file__),
         "--repeats", str(args.repeats), "--emit-json"],
        capture_output=True, text=True, env=env, check=True,
    )
    fallback = json.loads(child.stdout)

    print(f"primary backend: {results['backend']}   fallback: {fallback['backend']}")
    print(f"{'kernel':<22}{results['backend']:>12}{fallback['backend']:>12}{'speedup':>10}")
    for name in ("softmax", "softmax_backward", "layer_norm",
                 "layer_norm_backward", "adam_update", "train_step"):
        a, b = results[name], fallback[name]
        print(f"{name:<22}{a * 1e3:>10.3f}ms{b * 1e3:>10.3f}ms{b / a:>9.2f}x")


if __name__ == "__main__":
    main()
