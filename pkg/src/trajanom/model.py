"""Encoder-decoder over trajectory windows plus the learned occlusion latents.

The encoder embeds each visible timestep (input projection + learned
positional embedding indexed by absolute timestep) and runs self-attention
blocks; occlusion never needs masking because occluded timesteps are simply
not fed in.  The decoder mirrors the encoder stack and projects back to
input width.  A learned (T, C) tensor provides stand-in latents for
occluded timesteps; its rows are selected per occlusion and merged with the
observed latents before decoding.
"""
import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .occlusion import OcclusionSpec

_MAGIC = b"TRJCKPT1\n"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    window_length: int = 18
    input_width: int = 42
    latent_width: int = 256
    encoder_layers: int = 4
    attention_heads: int = 4
    feedforward_width: int = 512
    dropout: float = 0.0

    def __post_init__(self):
        for name in (
            "window_length",
            "input_width",
            "latent_width",
            "encoder_layers",
            "attention_heads",
            "feedforward_width",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.input_width % 2 != 0:
            raise ValueError(
                f"input_width must be even (xy pairs), got {self.input_width}"
            )
        if self.latent_width % self.attention_heads != 0:
            raise ValueError(
                f"latent_width {self.latent_width} not divisible by "
                f"attention_heads {self.attention_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass
class LatentSequence:
    """Latent vectors paired with the absolute timestep of each row."""

    values: np.ndarray
    time_index: np.ndarray

    def __post_init__(self):
        self.time_index = np.asarray(self.time_index, dtype=np.int64)
        if self.values.shape[-2] != len(self.time_index):
            raise ValueError(
                f"{self.values.shape[-2]} latent rows but "
                f"{len(self.time_index)} time indices"
            )
        if len(np.unique(self.time_index)) != len(self.time_index):
            raise ValueError("time_index entries must be distinct")


def select_learned_slice(learned: np.ndarray, spec: OcclusionSpec) -> np.ndarray:
    """Rows of the learned tensor covering the occluded run (a view)."""
    if learned.shape[0] != spec.window_length:
        raise ValueError(
            f"learned tensor has {learned.shape[0]} rows, "
            f"expected window length {spec.window_length}"
        )
    return learned[spec.start : spec.stop]


class TrajectoryModel:
    """Encoder, decoder, and learned occlusion latents with manual gradients."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        C = config.latent_width
        self.input_proj = nn.Linear(rng, config.input_width, C)
        self.encoder_pos = rng.normal(0.0, 0.02, size=(config.window_length, C))
        self.g_encoder_pos = np.zeros_like(self.encoder_pos)
        self.encoder_blocks = [
            nn.TransformerBlock(
                rng, C, config.attention_heads, config.feedforward_width, config.dropout
            )
            for _ in range(config.encoder_layers)
        ]
        self.learned_latents = rng.normal(0.0, 0.02, size=(config.window_length, C))
        self.g_learned_latents = np.zeros_like(self.learned_latents)
        self.decoder_pos = rng.normal(0.0, 0.02, size=(config.window_length, C))
        self.g_decoder_pos = np.zeros_like(self.decoder_pos)
        self.decoder_blocks = [
            nn.TransformerBlock(
                rng, C, config.attention_heads, config.feedforward_width, config.dropout
            )
            for _ in range(config.encoder_layers)
        ]
        self.output_proj = nn.Linear(rng, C, config.input_width)

    # -- parameter registry ------------------------------------------------

    def named_parameters(self):
        """Yields (name, param, grad) in a stable order."""
        for name, p, g in self.input_proj.params():
            yield f"input_proj.{name}", p, g
        yield "encoder_pos", self.encoder_pos, self.g_encoder_pos
        for i, block in enumerate(self.encoder_blocks):
            for name, p, g in block.params():
                yield f"encoder.{i}.{name}", p, g
        yield "learned_latents", self.learned_latents, self.g_learned_latents
        yield "decoder_pos", self.decoder_pos, self.g_decoder_pos
        for i, block in enumerate(self.decoder_blocks):
            for name, p, g in block.params():
                yield f"decoder.{i}.{name}", p, g
        for name, p, g in self.output_proj.params():
            yield f"output_proj.{name}", p, g

    def parameters(self) -> dict:
        return {name: p for name, p, _ in self.named_parameters()}

    def gradients(self) -> dict:
        return {name: g for name, _, g in self.named_parameters()}

    def zero_grad(self):
        for _, _, g in self.named_parameters():
            g[...] = 0.0

    @property
    def parameter_count(self) -> int:
        return sum(p.size for _, p, _ in self.named_parameters())

    def load_parameters(self, values: dict):
        """Copy values into the model's arrays, checking names and shapes."""
        own = self.parameters()
        missing = set(own) - set(values)
        extra = set(values) - set(own)
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}"
            )
        for name, arr in own.items():
            incoming = np.asarray(values[name], dtype=np.float64)
            if incoming.shape != arr.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {incoming.shape} vs {arr.shape}"
                )
            arr[...] = incoming

    # -- forward / backward ------------------------------------------------

    def _check_time_index(self, points, time_index):
        time_index = np.asarray(time_index, dtype=np.int64)
        T = self.config.window_length
        if points.shape[-1] != self.config.input_width:
            raise ValueError(
                f"input width {points.shape[-1]} != configured {self.config.input_width}"
            )
        if points.shape[-2] != len(time_index):
            raise ValueError(
                f"{points.shape[-2]} timesteps but {len(time_index)} time indices"
            )
        if len(time_index) < 1:
            raise ValueError("need at least one visible timestep")
        if np.any(time_index < 0) or np.any(time_index >= T):
            raise ValueError(f"time indices must lie in [0, {T})")
        if len(np.unique(time_index)) != len(time_index):
            raise ValueError("time indices must be distinct")
        return time_index

    def encode_train(self, points, time_index, rng=None):
        """Training forward pass; returns ((B, T', C) latents, cache)."""
        time_index = self._check_time_index(points, time_index)
        h, c_in = self.input_proj.forward(points)
        h = h + self.encoder_pos[time_index]
        block_caches = []
        for block in self.encoder_blocks:
            h, c = block.forward(h, rng)
            block_caches.append(c)
        return h, (c_in, time_index, block_caches)

    def encode_backward(self, dz, cache):
        """Accumulates parameter gradients; returns the input gradient."""
        c_in, time_index, block_caches = cache
        for block, c in zip(reversed(self.encoder_blocks), reversed(block_caches)):
            dz = block.backward(dz, c)
        self.g_encoder_pos[time_index] += dz.reshape(-1, len(time_index), dz.shape[-1]).sum(axis=0)
        return self.input_proj.backward(dz, c_in)

    def encode(self, points, time_index) -> LatentSequence:
        """Inference encoding of the visible timesteps (dropout disabled)."""
        points = np.asarray(points, dtype=np.float64)
        squeeze = points.ndim == 2
        if squeeze:
            points = points[None]
        z, _ = self.encode_train(points, time_index)
        if squeeze:
            z = z[0]
        return LatentSequence(values=z, time_index=np.asarray(time_index, dtype=np.int64))

    def decode_train(self, latents, rng=None):
        """Training forward pass; returns ((B, T, N) points, cache)."""
        T = self.config.window_length
        if latents.shape[-2] != T:
            raise ValueError(f"decoder input covers {latents.shape[-2]} steps, expected {T}")
        if latents.shape[-1] != self.config.latent_width:
            raise ValueError(
                f"latent width {latents.shape[-1]} != configured {self.config.latent_width}"
            )
        h = latents + self.decoder_pos
        block_caches = []
        for block in self.decoder_blocks:
            h, c = block.forward(h, rng)
            block_caches.append(c)
        out, c_out = self.output_proj.forward(h)
        return out, (block_caches, c_out)

    def decode_backward(self, dout, cache):
        """Accumulates parameter gradients; returns the latent-input gradient."""
        block_caches, c_out = cache
        dh = self.output_proj.backward(dout, c_out)
        for block, c in zip(reversed(self.decoder_blocks), reversed(block_caches)):
            dh = block.backward(dh, c)
        self.g_decoder_pos += dh.reshape(-1, *dh.shape[-2:]).sum(axis=0)
        return dh

    def decode(self, latents) -> np.ndarray:
        """Inference decoding of a full latent sequence (dropout disabled)."""
        latents = np.asarray(latents, dtype=np.float64)
        squeeze = latents.ndim == 2
        if squeeze:
            latents = latents[None]
        out, _ = self.decode_train(latents)
        return out[0] if squeeze else out

    # -- checkpointing -----------------------------------------------------

    def to_checkpoint(self, step: int = 0, optimizer: dict | None = None) -> "Checkpoint":
        params = {name: p.copy() for name, p, _ in self.named_parameters()}
        return Checkpoint(
            config=self.config, parameters=params, step=step, seed=self.seed,
            optimizer=optimizer,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: "Checkpoint") -> "TrajectoryModel":
        model = cls(checkpoint.config, seed=checkpoint.seed)
        model.load_parameters(checkpoint.parameters)
        return model


@dataclass
class Checkpoint:
    """Model snapshot: config, parameters, step counter, seed, optimizer state.

    optimizer, when present, is {"m": {name: array}, "v": {name: array},
    "step_count": int}.
    """

    config: ModelConfig
    parameters: dict
    step: int = 0
    seed: int = 0
    optimizer: dict | None = None


def _array_entries(checkpoint: Checkpoint):
    for name, arr in checkpoint.parameters.items():
        yield name, arr
    if checkpoint.optimizer is not None:
        for kind in ("m", "v"):
            for name, arr in checkpoint.optimizer[kind].items():
                yield f"optimizer.{kind}.{name}", arr


def save_checkpoint(checkpoint: Checkpoint, path):
    """Writes the documented container: magic, header length, JSON header,
    then each array's little-endian payload in header order."""
    entries = [(name, np.ascontiguousarray(arr, dtype="<f8")) for name, arr in _array_entries(checkpoint)]
    header = {
        "version": _FORMAT_VERSION,
        "config": dataclasses.asdict(checkpoint.config),
        "step": int(checkpoint.step),
        "seed": int(checkpoint.seed),
        "optimizer_step_count": (
            None if checkpoint.optimizer is None else int(checkpoint.optimizer["step_count"])
        ),
        "arrays": [
            {"name": name, "dtype": "<f8", "shape": list(arr.shape)}
            for name, arr in entries
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in entries:
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise ValueError(f"{path}: truncated payload for array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    config = ModelConfig(**header["config"])
    params = {}
    opt_m = {}
    opt_v = {}
    for name, arr in arrays.items():
        if name.startswith("optimizer.m."):
            opt_m[name[len("optimizer.m.") :]] = arr
        elif name.startswith("optimizer.v."):
            opt_v[name[len("optimizer.v.") :]] = arr
        else:
            params[name] = arr
    optimizer = None
    if header.get("optimizer_step_count") is not None:
        optimizer = {"m": opt_m, "v": opt_v, "step_count": int(header["optimizer_step_count"])}
    return Checkpoint(
        config=config, parameters=params, step=int(header["step"]),
        seed=int(header["seed"]), optimizer=optimizer,
    )
