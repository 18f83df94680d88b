# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused C kernels for the hot inner loops.

Mirrors ``numpy_ops`` exactly; see that module for the contract. Keeping the
arithmetic expressions identical to the numpy versions keeps the two backends
within float rounding of each other.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()

NAME = "compiled"


def sigmoid_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = 1.0 / (1.0 + exp(-x[i, j]))
    return out_arr


def sigmoid_bwd(double[:, ::1] grad, double[:, ::1] y):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = grad[i, j] * y[i, j] * (1.0 - y[i, j])
    return out_arr


def leaky_relu_fwd(double[:, ::1] x, double slope):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = x[i, j] if x[i, j] > 0.0 else slope * x[i, j]
    return out_arr


def leaky_relu_bwd(double[:, ::1] grad, double[:, ::1] x, double slope):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        for j in range(c):
            out[i, j] = grad[i, j] if x[i, j] > 0.0 else grad[i, j] * slope
    return out_arr


def row_softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    cdef double mx, s
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        mx = x[i, 0]
        for j in range(1, c):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(c):
            out[i, j] = exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(c):
            out[i, j] /= s
    return out_arr


def row_softmax_bwd(double[:, ::1] grad, double[:, ::1] y):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    cdef double inner
    out_arr = np.empty((r, c))
    cdef double[:, ::1] out = out_arr
    for i in range(r):
        inner = 0.0
        for j in range(c):
            inner += grad[i, j] * y[i, j]
        for j in range(c):
            out[i, j] = y[i, j] * (grad[i, j] - inner)
    return out_arr


def segment_softmax_fwd(double[:, ::1] values, long[::1] segments, Py_ssize_t n_segments):
    cdef Py_ssize_t n = values.shape[0], i
    seg_max_arr = np.full(n_segments, -INFINITY)
    denom_arr = np.zeros(n_segments)
    out_arr = np.empty((n, 1))
    cdef double[::1] seg_max = seg_max_arr
    cdef double[::1] denom = denom_arr
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        if values[i, 0] > seg_max[segments[i]]:
            seg_max[segments[i]] = values[i, 0]
    for i in range(n):
        out[i, 0] = exp(values[i, 0] - seg_max[segments[i]])
        denom[segments[i]] += out[i, 0]
    for i in range(n):
        out[i, 0] /= denom[segments[i]]
    return out_arr


def segment_softmax_bwd(double[:, ::1] grad, double[:, ::1] y, long[::1] segments, Py_ssize_t n_segments):
    cdef Py_ssize_t n = y.shape[0], i
    inner_arr = np.zeros(n_segments)
    out_arr = np.empty((n, 1))
    cdef double[::1] inner = inner_arr
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        inner[segments[i]] += grad[i, 0] * y[i, 0]
    for i in range(n):
        out[i, 0] = y[i, 0] * (grad[i, 0] - inner[segments[i]])
    return out_arr


def segment_sum_fwd(double[:, ::1] values, long[::1] segments, Py_ssize_t n_segments):
    cdef Py_ssize_t n = values.shape[0], c = values.shape[1], i, j
    out_arr = np.zeros((n_segments, c))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(c):
            out[segments[i], j] += values[i, j]
    return out_arr


def segment_sum_bwd(double[:, ::1] grad, long[::1] segments):
    cdef Py_ssize_t n = segments.shape[0], c = grad.shape[1], i, j
    out_arr = np.empty((n, c))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(c):
            out[i, j] = grad[segments[i], j]
    return out_arr


def adamw_update(double[:, ::1] param, double[:, ::1] grad,
                 double[:, ::1] m, double[:, ::1] v,
                 double lr, double beta1, double beta2, double eps,
                 double weight_decay, long step):
    cdef Py_ssize_t r = param.shape[0], c = param.shape[1], i, j
    cdef double c1 = 1.0 - beta1**step
    cdef double c2 = 1.0 - beta2**step
    cdef double m_hat, v_hat
    for i in range(r):
        for j in range(c):
            m[i, j] = beta1 * m[i, j] + (1.0 - beta1) * grad[i, j]
            v[i, j] = beta2 * v[i, j] + (1.0 - beta2) * grad[i, j] * grad[i, j]
            m_hat = m[i, j] / c1
            v_hat = v[i, j] / c2
            param[i, j] -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * param[i, j])
