"""Forward/backward kernels for the layer kinds used by the networks.

Tensors are ``(N, C, H, W)`` numpy arrays.  Each ``*_forward`` returns the
output and a cache; the matching ``*_backward`` takes the output gradient and
that cache.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

KINDS = (
    "conv3x3_pad1",
    "deconv2x2_stride2",
    "batch_norm",
    "leaky_relu",
    "max_pool2x2",
    "fully_connected",
    "dropout",
    "concat_channels",
    "sigmoid",
)


def conv3x3_forward(x, weight, bias):
    n, c, h, w = x.shape
    out_ch = weight.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # n, c, h, w, 3, 3
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)
    y = cols @ weight.reshape(out_ch, -1).T
    y += bias
    y = y.reshape(n, h, w, out_ch).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(y), (cols, x.shape, weight)


def conv3x3_backward(dy, cache):
    cols, (n, c, h, w), weight = cache
    out_ch = weight.shape[0]
    dyf = dy.transpose(0, 2, 3, 1).reshape(-1, out_ch)
    dw = (dyf.T @ cols).reshape(weight.shape)
    db = dyf.sum(axis=0)
    dcols = (dyf @ weight.reshape(out_ch, -1)).reshape(n, h, w, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


def deconv2x2_forward(x, weight, bias):
    # weight: (in_ch, out_ch, 2, 2); every input pixel owns a disjoint 2x2 output block.
    n, c, h, w = x.shape
    out_ch = weight.shape[1]
    xf = x.transpose(0, 2, 3, 1).reshape(-1, c)
    y = (xf @ weight.reshape(c, -1)).reshape(n, h, w, out_ch, 2, 2)
    y = y.transpose(0, 3, 1, 4, 2, 5).reshape(n, out_ch, 2 * h, 2 * w)
    y = y + bias[None, :, None, None]
    return y, (xf, x.shape, weight)


def deconv2x2_backward(dy, cache):
    xf, (n, c, h, w), weight = cache
    out_ch = weight.shape[1]
    dyf = dy.reshape(n, out_ch, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(n * h * w, -1)
    dw = (xf.T @ dyf).reshape(weight.shape)
    dx = (dyf @ weight.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    db = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx), dw, db


def batch_norm_forward(x, gamma, beta, running_mean, running_var, train, eps, momentum):
    """Returns ``(y, cache, (new_mean, new_var))``; running stats are not mutated."""
    shape = (1, -1, 1, 1)
    if train:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        centered = x.astype(np.float64) - mean.reshape(shape)
        var = np.mean(centered * centered, axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std.reshape(shape)
        unbiased = var * m / max(m - 1, 1)
        new_stats = (
            momentum * running_mean + (1 - momentum) * mean.astype(running_mean.dtype),
            momentum * running_var + (1 - momentum) * unbiased.astype(running_var.dtype),
        )
    else:
        inv_std = 1.0 / np.sqrt(running_var.astype(np.float64) + eps)
        xhat = (x.astype(np.float64) - running_mean.reshape(shape)) * inv_std.reshape(shape)
        new_stats = None
    y = (xhat * gamma.reshape(shape) + beta.reshape(shape)).astype(x.dtype)
    return y, (xhat, inv_std, gamma, train), new_stats


def batch_norm_backward(dy, cache):
    xhat, inv_std, gamma, train = cache
    shape = (1, -1, 1, 1)
    dy64 = dy.astype(np.float64)
    dgamma = np.sum(dy64 * xhat, axis=(0, 2, 3))
    dbeta = np.sum(dy64, axis=(0, 2, 3))
    dxhat = dy64 * gamma.reshape(shape)
    if train:
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dx = (inv_std.reshape(shape) / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3), keepdims=True)
            - xhat * np.sum(dxhat * xhat, axis=(0, 2, 3), keepdims=True)
        )
    else:
        dx = dxhat * inv_std.reshape(shape)
    return dx.astype(dy.dtype), dgamma.astype(gamma.dtype), dbeta.astype(gamma.dtype)


def leaky_relu_forward(x, slope):
    positive = x > 0
    return np.where(positive, x, slope * x), (positive, slope)


def leaky_relu_backward(dy, cache):
    positive, slope = cache
    return np.where(positive, dy, slope * dy)


def max_pool2x2_forward(x):
    # Odd trailing rows/columns are dropped (floor division of the extent).
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    idx = blocks.argmax(axis=-1)[..., None]
    y = np.take_along_axis(blocks, idx, axis=-1)[..., 0]
    return y, (idx, x.shape)


def max_pool2x2_backward(dy, cache):
    idx, (n, c, h, w) = cache
    ho, wo = h // 2, w // 2
    dblocks = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dblocks, idx, dy[..., None], axis=-1)
    dblocks = dblocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    dx[:, :, :2 * ho, :2 * wo] = dblocks.reshape(n, c, 2 * ho, 2 * wo)
    return dx


def fully_connected_forward(x, weight, bias):
    n = x.shape[0]
    xf = x.reshape(n, -1)
    y = xf @ weight.T + bias
    return y.reshape(n, -1, 1, 1), (xf, x.shape, weight)


def fully_connected_backward(dy, cache):
    xf, shape, weight = cache
    dyf = dy.reshape(dy.shape[0], -1)
    dw = dyf.T @ xf
    db = dyf.sum(axis=0)
    dx = (dyf @ weight).reshape(shape)
    return dx, dw, db


def dropout_forward(x, p, train, rng: np.random.Generator | None):
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval is the identity."""
    if not train or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    mask = keep.astype(x.dtype) * scale
    return x * mask, mask


def dropout_backward(dy, cache):
    return dy if cache is None else dy * cache


def concat_forward(xs):
    return np.concatenate(xs, axis=1), [x.shape[1] for x in xs]


def concat_backward(dy, cache):
    bounds = np.cumsum(cache)[:-1]
    return np.split(dy, bounds, axis=1)


def sigmoid_forward(x):
    y = expit(x)
    return y, y


def sigmoid_backward(dy, cache):
    y = cache
    return dy * y * (1 - y)
