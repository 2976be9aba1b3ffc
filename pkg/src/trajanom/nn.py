"""Dense layers with hand-written forward and backward passes.

Every layer exposes forward(x, ...) -> (y, cache) and backward(dy, cache) -> dx.
Parameter gradients accumulate into the layer's g_* arrays; callers zero them
between steps.  Caches are per-call so one layer instance can serve several
forward passes before the matching backwards run (in reverse order is not
required, each backward only needs its own cache).
"""
import math

import numpy as np

from . import kernels


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


class Linear:
    """Affine map over the last axis, uniform init scaled by fan-in."""

    def __init__(self, rng, n_in: int, n_out: int):
        bound = 1.0 / math.sqrt(n_in)
        self.w = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = rng.uniform(-bound, bound, size=n_out)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)

    def forward(self, x):
        return x @ self.w + self.b, x

    def backward(self, dy, cache):
        x = cache
        n_in, n_out = self.w.shape
        self.gw += x.reshape(-1, n_in).T @ dy.reshape(-1, n_out)
        self.gb += dy.reshape(-1, n_out).sum(axis=0)
        return dy @ self.w.T

    def params(self):
        yield "w", self.w, self.gw
        yield "b", self.b, self.gb


class LayerNorm:
    """Normalization over the last axis with learned scale and shift."""

    def __init__(self, width: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)

    def forward(self, x):
        shape = x.shape
        x2 = _contig(x.reshape(-1, shape[-1]))
        y2, xhat, inv_std = kernels.layer_norm(x2, self.gamma, self.beta, self.eps)
        return y2.reshape(shape), (xhat, inv_std, shape)

    def backward(self, dy, cache):
        xhat, inv_std, shape = cache
        dy2 = _contig(dy.reshape(-1, shape[-1]))
        dx2, dgamma, dbeta = kernels.layer_norm_backward(dy2, xhat, inv_std, self.gamma)
        self.ggamma += dgamma
        self.gbeta += dbeta
        return dx2.reshape(shape)

    def params(self):
        yield "gamma", self.gamma, self.ggamma
        yield "beta", self.beta, self.gbeta


class MultiHeadAttention:
    """Self-attention across timesteps of a (batch, steps, width) array."""

    def __init__(self, rng, width: int, heads: int):
        if width % heads != 0:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        self.query = Linear(rng, width, width)
        self.key = Linear(rng, width, width)
        self.value = Linear(rng, width, width)
        self.out = Linear(rng, width, width)

    def _split(self, x, batch, steps):
        return x.reshape(batch, steps, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def _merge(self, x, batch, steps):
        return x.transpose(0, 2, 1, 3).reshape(batch, steps, self.width)

    def forward(self, x):
        batch, steps, _ = x.shape
        scale = 1.0 / math.sqrt(self.head_dim)
        q_flat, cq = self.query.forward(x)
        k_flat, ck = self.key.forward(x)
        v_flat, cv = self.value.forward(x)
        q = self._split(q_flat, batch, steps)
        k = self._split(k_flat, batch, steps)
        v = self._split(v_flat, batch, steps)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        probs = kernels.softmax(_contig(scores.reshape(-1, steps))).reshape(scores.shape)
        context = probs @ v
        y, co = self.out.forward(self._merge(context, batch, steps))
        return y, (cq, ck, cv, co, q, k, v, probs, batch, steps, scale)

    def backward(self, dy, cache):
        cq, ck, cv, co, q, k, v, probs, batch, steps, scale = cache
        dcontext = self._split(self.out.backward(dy, co), batch, steps)
        dprobs = dcontext @ v.transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dcontext
        dscores = kernels.softmax_backward(
            _contig(probs.reshape(-1, steps)), _contig(dprobs.reshape(-1, steps))
        ).reshape(dprobs.shape) * scale
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        dx = self.query.backward(self._merge(dq, batch, steps), cq)
        dx += self.key.backward(self._merge(dk, batch, steps), ck)
        dx += self.value.backward(self._merge(dv, batch, steps), cv)
        return dx

    def params(self):
        for prefix, layer in (
            ("query", self.query),
            ("key", self.key),
            ("value", self.value),
            ("out", self.out),
        ):
            for name, p, g in layer.params():
                yield f"{prefix}.{name}", p, g


class FeedForward:
    """Two-layer position-wise ReLU network."""

    def __init__(self, rng, width: int, hidden: int):
        self.inner = Linear(rng, width, hidden)
        self.outer = Linear(rng, hidden, width)

    def forward(self, x):
        h, ci = self.inner.forward(x)
        a = np.maximum(h, 0.0)
        y, co = self.outer.forward(a)
        return y, (ci, h, co)

    def backward(self, dy, cache):
        ci, h, co = cache
        da = self.outer.backward(dy, co)
        return self.inner.backward(da * (h > 0.0), ci)

    def params(self):
        for name, p, g in self.inner.params():
            yield f"inner.{name}", p, g
        for name, p, g in self.outer.params():
            yield f"outer.{name}", p, g


def _dropout(x, p, rng):
    if p <= 0.0 or rng is None:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


class TransformerBlock:
    """Post-norm block: attention and feed-forward, each with a residual."""

    def __init__(self, rng, width: int, heads: int, feedforward: int, dropout: float = 0.0):
        self.attn = MultiHeadAttention(rng, width, heads)
        self.norm_attn = LayerNorm(width)
        self.ff = FeedForward(rng, width, feedforward)
        self.norm_ff = LayerNorm(width)
        self.dropout = dropout

    def forward(self, x, rng=None):
        a, c_attn = self.attn.forward(x)
        a, mask_a = _dropout(a, self.dropout, rng)
        n1, c_n1 = self.norm_attn.forward(x + a)
        f, c_ff = self.ff.forward(n1)
        f, mask_f = _dropout(f, self.dropout, rng)
        y, c_n2 = self.norm_ff.forward(n1 + f)
        return y, (c_attn, mask_a, c_n1, c_ff, mask_f, c_n2)

    def backward(self, dy, cache):
        c_attn, mask_a, c_n1, c_ff, mask_f, c_n2 = cache
        dh2 = self.norm_ff.backward(dy, c_n2)
        df = dh2 if mask_f is None else dh2 * mask_f
        dn1 = dh2 + self.ff.backward(df, c_ff)
        dh1 = self.norm_attn.backward(dn1, c_n1)
        da = dh1 if mask_a is None else dh1 * mask_a
        return dh1 + self.attn.backward(da, c_attn)

    def params(self):
        for prefix, layer in (
            ("attn", self.attn),
            ("norm_attn", self.norm_attn),
            ("ff", self.ff),
            ("norm_ff", self.norm_ff),
        ):
            for name, p, g in layer.params():
                yield f"{prefix}.{name}", p, g
