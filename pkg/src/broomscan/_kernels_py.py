"""Pure numpy versions of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and the same floating-point operation order.
"""
import numpy as np


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_gates_forward(z, c_prev):
    """Fused LSTM pointwise step.

    ``z`` holds the pre-activations (B, 4h) in gate order input, forget,
    cell candidate, output. Returns ``(gates, c, tanh_c, h)`` where ``gates``
    are the activated gates in the same layout.
    """
    n = c_prev.shape[1]
    gates = np.empty_like(z)
    gates[:, : 2 * n] = sigmoid(z[:, : 2 * n])
    gates[:, 2 * n : 3 * n] = np.tanh(z[:, 2 * n : 3 * n])
    gates[:, 3 * n :] = sigmoid(z[:, 3 * n :])
    i = gates[:, :n]
    f = gates[:, n : 2 * n]
    g = gates[:, 2 * n : 3 * n]
    o = gates[:, 3 * n :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return gates, c, tanh_c, h


def lstm_gates_backward(dh, dc_next, gates, c_prev, tanh_c):
    """Backward pass of :func:`lstm_gates_forward`.

    Returns ``(dz, dc_prev)``.
    """
    n = c_prev.shape[1]
    i = gates[:, :n]
    f = gates[:, n : 2 * n]
    g = gates[:, 2 * n : 3 * n]
    o = gates[:, 3 * n :]
    dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(gates)
    dz[:, :n] = dc * g * (i * (1.0 - i))
    dz[:, n : 2 * n] = dc * c_prev * (f * (1.0 - f))
    dz[:, 2 * n : 3 * n] = dc * i * (1.0 - g * g)
    dz[:, 3 * n :] = dh * tanh_c * (o * (1.0 - o))
    return dz, dc * f


def histogram_counts(values, lo, hi, n_bins):
    """Clamp ``values`` into [lo, hi] and count them into ``n_bins`` equal bins.

    ``hi`` itself lands in the last bin.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    idx = np.floor((v - lo) / (hi - lo) * n_bins).astype(np.int64)
    np.minimum(idx, n_bins - 1, out=idx)
    return np.bincount(idx, minlength=n_bins).astype(np.int64)
