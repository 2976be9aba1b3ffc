"""Pure numpy implementations of the hot per-step kernels.

These are the fallback backend; trajanom.kernels._native provides the same
functions compiled with Cython.  All inputs are C-contiguous float64 arrays,
2-d with one row per independent instance unless noted.
"""
import numpy as np


def softmax(x):
    """Row-wise softmax of a (rows, n) array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(y, dy):
    """Gradient through softmax given its output y and upstream dy."""
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def layer_norm(x, gamma, beta, eps):
    """Row-wise layer norm; returns (y, xhat, inv_std) for the backward pass."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std[:, None]
    return xhat * gamma + beta, xhat, inv_std


def layer_norm_backward(dy, xhat, inv_std, gamma):
    """Returns (dx, dgamma, dbeta) for layer_norm."""
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_std[:, None]
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, corr1, corr2):
    """In-place Adam step on flat views; corr1/corr2 are 1 - beta^t."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
