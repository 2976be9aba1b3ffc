# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-step inner loops (see reference.py for the API)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def softmax(double[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    out_arr = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    with nogil:
        for i in range(rows):
            mx = x[i, 0]
            for j in range(1, n):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(n):
                out[i, j] = exp(x[i, j] - mx)
                s += out[i, j]
            for j in range(n):
                out[i, j] /= s
    return out_arr


def softmax_backward(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t rows = y.shape[0], n = y.shape[1]
    dx_arr = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double inner
    with nogil:
        for i in range(rows):
            inner = 0.0
            for j in range(n):
                inner += dy[i, j] * y[i, j]
            for j in range(n):
                dx[i, j] = y[i, j] * (dy[i, j] - inner)
    return dx_arr


def layer_norm(double[:, ::1] x, double[::1] gamma, double[::1] beta, double eps):
    cdef Py_ssize_t rows = x.shape[0], n = x.shape[1]
    y_arr = np.empty((rows, n), dtype=np.float64)
    xhat_arr = np.empty((rows, n), dtype=np.float64)
    inv_arr = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] y = y_arr, xhat = xhat_arr
    cdef double[::1] inv = inv_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, d, s
    with nogil:
        for i in range(rows):
            mu = 0.0
            for j in range(n):
                mu += x[i, j]
            mu /= n
            var = 0.0
            for j in range(n):
                d = x[i, j] - mu
                var += d * d
            var /= n
            s = 1.0 / sqrt(var + eps)
            inv[i] = s
            for j in range(n):
                xhat[i, j] = (x[i, j] - mu) * s
                y[i, j] = xhat[i, j] * gamma[j] + beta[j]
    return y_arr, xhat_arr, inv_arr


def layer_norm_backward(double[:, ::1] dy, double[:, ::1] xhat,
                        double[::1] inv_std, double[::1] gamma):
    cdef Py_ssize_t rows = dy.shape[0], n = dy.shape[1]
    dx_arr = np.empty((rows, n), dtype=np.float64)
    dgamma_arr = np.zeros(n, dtype=np.float64)
    dbeta_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr, dbeta = dbeta_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2, dxh
    with nogil:
        for i in range(rows):
            m1 = 0.0
            m2 = 0.0
            for j in range(n):
                dxh = dy[i, j] * gamma[j]
                m1 += dxh
                m2 += dxh * xhat[i, j]
            m1 /= n
            m2 /= n
            for j in range(n):
                dxh = dy[i, j] * gamma[j]
                dx[i, j] = (dxh - m1 - xhat[i, j] * m2) * inv_std[i]
                dgamma[j] += dy[i, j] * xhat[i, j]
                dbeta[j] += dy[i, j]
    return dx_arr, dgamma_arr, dbeta_arr


def adam_update(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double corr1, double corr2):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            param[i] -= lr * (m[i] / corr1) / (sqrt(v[i] / corr2) + eps)
