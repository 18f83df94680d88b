"""Pure-numpy kernel implementations.

This is the fallback backend: every function here has a fused counterpart in
the compiled module ``_fastops``. Semantics must match; the compiled versions
only remove temporary allocations and per-call numpy overhead on the small
matrices this package works with.

All arrays are float64 and C-contiguous; segment ids are int64.
"""

import numpy as np

NAME = "numpy"


def sigmoid_fwd(x):
    return 1.0 / (1.0 + np.exp(-x))


def sigmoid_bwd(grad, y):
    return grad * y * (1.0 - y)


def leaky_relu_fwd(x, slope):
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_bwd(grad, x, slope):
    return grad * np.where(x > 0.0, 1.0, slope)


def row_softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_softmax_bwd(grad, y):
    inner = (grad * y).sum(axis=1, keepdims=True)
    return y * (grad - inner)


def segment_softmax_fwd(values, segments, n_segments):
    """Softmax of a column vector within each segment id group."""
    v = values[:, 0]
    seg_max = np.full(n_segments, -np.inf)
    np.maximum.at(seg_max, segments, v)
    e = np.exp(v - seg_max[segments])
    denom = np.zeros(n_segments)
    np.add.at(denom, segments, e)
    return (e / denom[segments])[:, None]


def segment_softmax_bwd(grad, y, segments, n_segments):
    gy = grad[:, 0] * y[:, 0]
    inner = np.zeros(n_segments)
    np.add.at(inner, segments, gy)
    return (y[:, 0] * (grad[:, 0] - inner[segments]))[:, None]


def segment_sum_fwd(values, segments, n_segments):
    out = np.zeros((n_segments, values.shape[1]))
    np.add.at(out, segments, values)
    return out


def segment_sum_bwd(grad, segments):
    return grad[segments]


def adamw_update(param, grad, m, v, lr, beta1, beta2, eps, weight_decay, step):
    """In-place AdamW step with decoupled weight decay.

    ``step`` is the 1-based update count used for bias correction.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)
