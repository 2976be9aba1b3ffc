"""Kernel correctness: reference implementations against independent
oracles and finite differences, and native/python backend parity."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajanom.kernels import BACKEND, backend_name, reference

try:
    from trajanom.kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="extension not built")


def _rand(rng, *shape):
    return rng.standard_normal(shape)


# ---------------------------------------------------------------- softmax

def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    y = reference.softmax(_rand(rng, 7, 13))
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    assert (y > 0).all()


def test_softmax_matches_direct_formula():
    rng = np.random.default_rng(1)
    x = _rand(rng, 5, 9)
    direct = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(reference.softmax(x), direct, atol=1e-12)


def test_softmax_shift_invariant():
    rng = np.random.default_rng(2)
    x = _rand(rng, 4, 6)
    shifted = x + rng.standard_normal((4, 1)) * 50
    np.testing.assert_allclose(
        reference.softmax(x), reference.softmax(shifted), atol=1e-12
    )


def test_softmax_overflow_safe():
    x = np.array([[1000.0, 1000.0, -1000.0]])
    y = reference.softmax(x)
    assert np.isfinite(y).all()
    np.testing.assert_allclose(y[0, :2], 0.5, atol=1e-12)


def test_softmax_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = _rand(rng, 3, 5)
    dy = _rand(rng, 3, 5)
    y = reference.softmax(x)
    dx = reference.softmax_backward(y, dy)
    h = 1e-6
    for i in range(3):
        for j in range(5):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            num = ((reference.softmax(xp) - reference.softmax(xm)) * dy).sum() / (2 * h)
            assert abs(num - dx[i, j]) < 1e-8


# -------------------------------------------------------------- layernorm

def test_layer_norm_standardizes_rows():
    rng = np.random.default_rng(4)
    x = _rand(rng, 6, 11) * 3 + 2
    gamma = np.ones(11)
    beta = np.zeros(11)
    y, xhat, inv_std = reference.layer_norm(x, gamma, beta, 1e-12)
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(y.std(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(y, xhat, atol=1e-12)


def test_layer_norm_affine_params_apply():
    rng = np.random.default_rng(5)
    x = _rand(rng, 2, 8)
    gamma = _rand(rng, 8)
    beta = _rand(rng, 8)
    y, xhat, _ = reference.layer_norm(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(y, xhat * gamma + beta, atol=1e-12)


def test_layer_norm_backward_matches_finite_differences():
    rng = np.random.default_rng(6)
    x = _rand(rng, 3, 7)
    gamma = _rand(rng, 7)
    beta = _rand(rng, 7)
    dy = _rand(rng, 3, 7)
    eps = 1e-5

    _, xhat, inv_std = reference.layer_norm(x, gamma, beta, eps)
    dx, dgamma, dbeta = reference.layer_norm_backward(dy, xhat, inv_std, gamma)

    h = 1e-6

    def loss(xv, gv, bv):
        y, _, _ = reference.layer_norm(xv, gv, bv, eps)
        return (y * dy).sum()

    for i in range(3):
        for j in range(7):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            assert abs((loss(xp, gamma, beta) - loss(xm, gamma, beta)) / (2 * h) - dx[i, j]) < 1e-7
    for j in range(7):
        gp, gm = gamma.copy(), gamma.copy()
        gp[j] += h
        gm[j] -= h
        assert abs((loss(x, gp, beta) - loss(x, gm, beta)) / (2 * h) - dgamma[j]) < 1e-7
        bp, bm = beta.copy(), beta.copy()
        bp[j] += h
        bm[j] -= h
        assert abs((loss(x, gamma, bp) - loss(x, gamma, bm)) / (2 * h) - dbeta[j]) < 1e-7


# ------------------------------------------------------------------ adam

def test_adam_update_matches_hand_step():
    # one step from zero moments: m=(1-b1)g, v=(1-b2)g^2, with bias correction
    # the update direction is exactly -lr * sign-free g/(|g|+eps')
    param = np.array([1.0, -2.0])
    grad = np.array([0.5, -0.25])
    m = np.zeros(2)
    v = np.zeros(2)
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    reference.adam_update(param, grad, m, v, lr, b1, b2, eps, 1 - b1, 1 - b2)
    mhat = grad  # (1-b1)g / (1-b1)
    vhat = grad * grad
    expected = np.array([1.0, -2.0]) - lr * mhat / (np.sqrt(vhat) + eps)
    np.testing.assert_allclose(param, expected, atol=1e-12)
    np.testing.assert_allclose(m, (1 - b1) * grad, atol=1e-15)
    np.testing.assert_allclose(v, (1 - b2) * grad * grad, atol=1e-15)


def test_adam_two_steps_match_loop_oracle():
    rng = np.random.default_rng(7)
    n = 11
    param = _rand(rng, n)
    grads = [_rand(rng, n), _rand(rng, n)]
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8

    p_ref = param.copy()
    m_ref = np.zeros(n)
    v_ref = np.zeros(n)
    for t, g in enumerate(grads, start=1):
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        mhat = m_ref / (1 - b1**t)
        vhat = v_ref / (1 - b2**t)
        p_ref = p_ref - lr * mhat / (np.sqrt(vhat) + eps)

    p = param.copy()
    m = np.zeros(n)
    v = np.zeros(n)
    for t, g in enumerate(grads, start=1):
        reference.adam_update(p, g, m, v, lr, b1, b2, eps, 1 - b1**t, 1 - b2**t)
    np.testing.assert_allclose(p, p_ref, atol=1e-14)


# -------------------------------------------------------- backend parity

@needs_native
def test_native_softmax_matches_reference():
    rng = np.random.default_rng(8)
    x = np.ascontiguousarray(_rand(rng, 9, 17))
    np.testing.assert_allclose(_native.softmax(x), reference.softmax(x), atol=1e-14)


@needs_native
def test_native_softmax_backward_matches_reference():
    rng = np.random.default_rng(9)
    x = np.ascontiguousarray(_rand(rng, 6, 8))
    dy = np.ascontiguousarray(_rand(rng, 6, 8))
    y = reference.softmax(x)
    np.testing.assert_allclose(
        _native.softmax_backward(np.ascontiguousarray(y), dy),
        reference.softmax_backward(y, dy),
        atol=1e-14,
    )


@needs_native
def test_native_layer_norm_matches_reference():
    rng = np.random.default_rng(10)
    x = np.ascontiguousarray(_rand(rng, 5, 12))
    gamma = np.ascontiguousarray(_rand(rng, 12))
    beta = np.ascontiguousarray(_rand(rng, 12))
    yn, xn, sn = _native.layer_norm(x, gamma, beta, 1e-5)
    yr, xr, sr = reference.layer_norm(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(yn, yr, atol=1e-14)
    np.testing.assert_allclose(xn, xr, atol=1e-14)
    np.testing.assert_allclose(sn, sr, atol=1e-14)


@needs_native
def test_native_layer_norm_backward_matches_reference():
    rng = np.random.default_rng(11)
    x = np.ascontiguousarray(_rand(rng, 5, 12))
    gamma = np.ascontiguousarray(_rand(rng, 12))
    beta = np.ascontiguousarray(_rand(rng, 12))
    dy = np.ascontiguousarray(_rand(rng, 5, 12))
    _, xhat, inv_std = reference.layer_norm(x, gamma, beta, 1e-5)
    outs_n = _native.layer_norm_backward(
        dy, np.ascontiguousarray(xhat), np.ascontiguousarray(inv_std), gamma
    )
    outs_r = reference.layer_norm_backward(dy, xhat, inv_std, gamma)
    for a, b in zip(outs_n, outs_r):
        np.testing.assert_allclose(a, b, atol=1e-14)


@needs_native
def test_native_adam_matches_reference():
    rng = np.random.default_rng(12)
    n = 23
    p0 = _rand(rng, n)
    g = _rand(rng, n)
    m0 = np.abs(_rand(rng, n)) * 0.1
    v0 = np.abs(_rand(rng, n)) * 0.1

    pn, mn, vn = p0.copy(), m0.copy(), v0.copy()
    pr, mr, vr = p0.copy(), m0.copy(), v0.copy()
    args = (1e-3, 0.9, 0.999, 1e-8, 1 - 0.9**3, 1 - 0.999**3)
    _native.adam_update(pn, g, mn, vn, *args)
    reference.adam_update(pr, g, mr, vr, *args)
    np.testing.assert_allclose(pn, pr, atol=1e-15)
    np.testing.assert_allclose(mn, mr, atol=1e-15)
    np.testing.assert_allclose(vn, vr, atol=1e-15)


def test_backend_name_reports_selection():
    assert backend_name() == BACKEND
    assert BACKEND in ("native", "python")


# ------------------------------------------------------------ properties

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(2, 16))
def test_softmax_probability_simplex(seed, rows, cols):
    rng = np.random.default_rng(seed)
    y = reference.softmax(rng.standard_normal((rows, cols)) * 10)
    assert (y >= 0).all()
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-10)
