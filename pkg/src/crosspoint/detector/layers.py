"""Forward/backward primitives for the detector, on float64 numpy arrays.

Activations are laid out H x W x C; convolution kernels kh x kw x Cin x Cout
with 'same' zero padding for odd kernels. Each forward returns (output,
cache) and the matching backward consumes (grad_output, cache). No
framework: these functions pair with central finite differences in the
gradient checks.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "conv2d_forward",
    "conv2d_backward",
    "relu_forward",
    "relu_backward",
    "maxpool2_forward",
    "maxpool2_backward",
    "fc_forward",
    "fc_backward",
    "sigmoid",
    "bce_with_logits",
    "smooth_l1",
    "smooth_l1_grad",
]


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """Cross-correlation with 'same' zero padding; odd kernels only."""
    kh, kw, cin, _ = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {kh} x {kw}")
    if x.shape[2] != cin:
        raise ValueError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    ph, pw = kh // 2, kw // 2
    h, wd = x.shape[:2]
    # output side is floor(input / stride): never larger than the padded
    # sliding-window count, so the strided slices below always fit
    out_h = min((h + 2 * ph - kh) // stride + 1, h // stride)
    out_w = min((wd + 2 * pw - kw) // stride + 1, wd // stride)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"input {h} x {wd} too small for stride {stride}")
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    cols = np.empty((out_h, out_w, kh, kw, cin), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j, :] = xp[
                i : i + stride * out_h : stride, j : j + stride * out_w : stride, :
            ]
    y = np.tensordot(cols, w, axes=([2, 3, 4], [0, 1, 2])) + b
    cache = (cols, w, stride, x.shape, (ph, pw))
    return y, cache


def conv2d_backward(dy: np.ndarray, cache):
    cols, w, stride, xshape, (ph, pw) = cache
    kh, kw = w.shape[:2]
    out_h, out_w = dy.shape[:2]
    db = dy.sum(axis=(0, 1))
    dw = np.tensordot(cols, dy, axes=([0, 1], [0, 1]))
    dcols = np.tensordot(dy, w, axes=([2], [3]))
    dxp = np.zeros((xshape[0] + 2 * ph, xshape[1] + 2 * pw, xshape[2]), dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[i : i + stride * out_h : stride, j : j + stride * out_w : stride, :] += dcols[
                :, :, i, j, :
            ]
    dx = dxp[ph : ph + xshape[0], pw : pw + xshape[1], :]
    return dx, dw, db


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy: np.ndarray, mask: np.ndarray):
    return dy * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    tiles = (
        x[: 2 * h2, : 2 * w2]
        .reshape(h2, 2, w2, 2, c)
        .transpose(0, 2, 4, 1, 3)
        .reshape(h2, w2, c, 4)
    )
    idx = tiles.argmax(axis=3)
    y = np.take_along_axis(tiles, idx[..., None], axis=3)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy: np.ndarray, cache):
    idx, xshape = cache
    h2, w2, c = dy.shape
    dtiles = np.zeros((h2, w2, c, 4), dtype=dy.dtype)
    np.put_along_axis(dtiles, idx[..., None], dy[..., None], axis=3)
    dx = np.zeros(xshape, dtype=dy.dtype)
    dx[: 2 * h2, : 2 * w2] = (
        dtiles.reshape(h2, w2, c, 2, 2).transpose(0, 3, 1, 4, 2).reshape(2 * h2, 2 * w2, c)
    )
    return dx


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, (x, w)


def fc_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-element binary cross entropy from logits, numerically stable."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def smooth_l1(x: np.ndarray) -> np.ndarray:
    """Elementwise 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise."""
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x: np.ndarray) -> np.ndarray:
    return np.clip(x, -1.0, 1.0)
