"""Forward/backward kernels for 1-D strided convolution, its transpose, PReLU
and dropout. Tensors are laid out as (batch, channels, time)."""

from __future__ import annotations

import numpy as np


def _im2col(xpad: np.ndarray, K: int, stride: int, n_out: int) -> np.ndarray:
    # (B, C, Tpad) -> (B * n_out, C * K)
    B, C, _ = xpad.shape
    win = np.lib.stride_tricks.sliding_window_view(xpad, K, axis=2)[:, :, ::stride][:, :, :n_out]
    return win.transpose(0, 2, 1, 3).reshape(B * n_out, C * K)


def _col2im(cols: np.ndarray, B: int, C: int, K: int, stride: int, n_in: int,
            length: int) -> np.ndarray:
    # adjoint of _im2col: (B * n_in, C * K) -> (B, C, length)
    cols = cols.reshape(B, n_in, C, K)
    out = np.zeros((B, C, length), dtype=cols.dtype)
    stop = stride * n_in
    for k in range(K):
        out[:, :, k:k + stop:stride] += cols[:, :, :, k].transpose(0, 2, 1)
    return out


def conv1d_forward(x, w, b, stride):
    """'Same'-padded strided convolution. w: (C_out, C_in, K); output length T // stride."""
    B, C_in, T = x.shape
    C_out, _, K = w.shape
    if T % stride:
        raise ValueError(f"length {T} not divisible by stride {stride}")
    pad = K // 2
    n_out = T // stride
    xpad = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = _im2col(xpad, K, stride, n_out)
    y = cols @ w.reshape(C_out, -1).T + b
    y = y.reshape(B, n_out, C_out).transpose(0, 2, 1)
    return y, (cols, x.shape, stride)


def conv1d_backward(dy, w, cache):
    cols, (B, C_in, T), stride = cache
    C_out, _, K = w.shape
    n_out = dy.shape[2]
    pad = K // 2
    dyr = dy.transpose(0, 2, 1).reshape(B * n_out, C_out)
    dw = (dyr.T @ cols).reshape(w.shape)
    db = dyr.sum(axis=0)
    dcols = dyr @ w.reshape(C_out, -1)
    dxpad = _col2im(dcols, B, C_in, K, stride, n_out, T + 2 * pad)
    return dxpad[:, :, pad:pad + T], dw, db


def tconv1d_forward(x, w, b, stride):
    """Transposed convolution, the exact adjoint of :func:`conv1d_forward`.

    w: (C_in, C_out, K); output length T * stride.
    """
    B, C_in, T_in = x.shape
    _, C_out, K = w.shape
    pad = K // 2
    T = T_in * stride
    xr = x.transpose(0, 2, 1).reshape(B * T_in, C_in)
    cols = xr @ w.reshape(C_in, -1)
    ypad = _col2im(cols, B, C_out, K, stride, T_in, T + 2 * pad)
    y = ypad[:, :, pad:pad + T] + b[None, :, None]
    return y, (xr, x.shape, stride)


def tconv1d_backward(dy, w, cache):
    xr, (B, C_in, T_in), stride = cache
    _, C_out, K = w.shape
    pad = K // 2
    dypad = np.pad(dy, ((0, 0), (0, 0), (pad, pad)))
    dcols = _im2col(dypad, K, stride, T_in)
    dx = (dcols @ w.reshape(C_in, -1).T).reshape(B, T_in, C_in).transpose(0, 2, 1)
    dw = (xr.T @ dcols).reshape(w.shape)
    db = dy.sum(axis=(0, 2))
    return dx, dw, db


def prelu_forward(x, alpha):
    return np.where(x > 0, x, alpha * x)


def prelu_backward(dy, x, alpha):
    pos = x > 0
    dx = np.where(pos, dy, alpha * dy)
    dalpha = np.sum(np.where(pos, 0.0, dy * x))
    return dx, dalpha


def dropout_mask(shape, p, rng, dtype=np.float64):
    """Inverted-dropout mask: kept units are scaled by 1/(1-p)."""
    keep = rng.random(shape) >= p
    return keep.astype(dtype) / (1.0 - p)
