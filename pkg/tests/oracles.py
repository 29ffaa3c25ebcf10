"""Independent reference computations used by the tests.

Nothing here calls the package's autodiff engine: losses are plain numpy and
derivatives come from finite differences.
"""

import numpy as np


def mlp_loss_numpy(widths, activation, theta, features, labels):
    """Mean softmax cross-entropy of an MLP stored as [W0, b0, W1, b1, ...] (W as fan_in x fan_out)."""
    act = {"relu": lambda z: np.maximum(z, 0.0), "tanh": np.tanh}[activation]
    h = np.asarray(features, dtype=np.float64)
    pos = 0
    n_layers = len(widths) - 1
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        w = theta[pos:pos + a * b].reshape(a, b)
        pos += a * b
        bias = theta[pos:pos + b]
        pos += b
        h = h @ w + bias
        if i < n_layers - 1:
            h = act(h)
    m = h.max(axis=1, keepdims=True)
    lse = np.log(np.exp(h - m).sum(axis=1)) + m[:, 0]
    return float(np.mean(lse - h[np.arange(len(labels)), labels]))


def central_difference_grad(f, theta, rel_step=1e-6):
    """Gradient by central differences with h_i = rel_step * (1 + |theta_i|)."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_step * (1.0 + abs(theta[i]))
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2.0 * h)
    return grad


def max_relative_error(actual, expected, floor=1e-4):
    """max_i |a_i - e_i| / max(|a_i|, |e_i|, floor)."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(actual), np.abs(expected)), floor)
    return float(np.max(np.abs(actual - expected) / den))


def n_params(widths):
    return sum(a * b + b for a, b in zip(widths, widths[1:]))
