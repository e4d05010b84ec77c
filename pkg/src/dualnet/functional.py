"""Fused neural primitives with hand-written backward rules.

All feature maps are ``[batch, length, channels]``.
"""
from __future__ import annotations

import numpy as np

from .exceptions import ShapeError
from .tensor import Tensor, _emit, _sigmoid


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Same-padded per-channel cross-correlation with ``kernel[K, c]``."""
    if x.ndim != 3:
        raise ShapeError(f"depthwise_conv1d: expected [b,L,c], got {x.shape}")
    K, c = kernel.shape
    if c != x.shape[2]:
        raise ShapeError(f"depthwise_conv1d: kernel has {c} channels, input has {x.shape[2]}")
    if K % 2 == 0:
        raise ShapeError(f"depthwise_conv1d: kernel size must be odd, got {K}")
    pad = K // 2
    L = x.shape[1]
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    out = np.zeros_like(x.data)
    for t in range(K):
        out += xp[:, t:t + L, :] * kernel.data[t]

    def grad(g):
        gk = np.empty_like(kernel.data)
        gxp = np.zeros_like(xp)
        for t in range(K):
            gk[t] = (xp[:, t:t + L, :] * g).sum(axis=(0, 1))
            gxp[:, t:t + L, :] += g * kernel.data[t]
        return gxp[:, pad:pad + L, :], gk

    return _emit("depthwise_conv1d", out, (x, kernel), grad)


def gru_scan(x: Tensor, w: Tensor, u: Tensor, b: Tensor) -> Tensor:
    """Run a GRU along the length axis from a zero state; returns every hidden state.

    ``w[3, c_in, h]``, ``u[3, h, h]`` and ``b[3, h]`` stack the update gate,
    reset gate and candidate parameters in that order::

        z = σ(x W_z + h U_z + b_z)
        r = σ(x W_r + h U_r + b_r)
        ĥ = tanh(x W_h + (r ⊙ h) U_h + b_h)
        h' = (1 - z) ⊙ h + z ⊙ ĥ
    """
    if x.ndim != 3:
        raise ShapeError(f"gru_scan: expected [b,L,c], got {x.shape}")
    nb, L, c_in = x.shape
    if w.shape[:2] != (3, c_in) or w.ndim != 3:
        raise ShapeError(f"gru_scan: input weights {w.shape} do not match {c_in} input channels")
    hid = w.shape[2]
    if u.shape != (3, hid, hid) or b.shape != (3, hid):
        raise ShapeError(f"gru_scan: recurrent weights {u.shape} / bias {b.shape} do not match hidden {hid}")

    X = x.data
    W, U, B = w.data, u.data, b.data
    # input projections for all steps at once: [3, b, L, h]
    xw = np.einsum("blc,gch->gblh", X, W) + B[:, None, None, :]
    H = np.zeros((nb, L, hid), dtype=X.dtype)
    Z = np.empty_like(H)
    R = np.empty_like(H)
    C = np.empty_like(H)
    h = np.zeros((nb, hid), dtype=X.dtype)
    for t in range(L):
        z = _sigmoid(xw[0, :, t] + h @ U[0])
        r = _sigmoid(xw[1, :, t] + h @ U[1])
        cand = np.tanh(xw[2, :, t] + (r * h) @ U[2])
        h = (1.0 - z) * h + z * cand
        Z[:, t], R[:, t], C[:, t], H[:, t] = z, r, cand, h

    def grad(gH):
        gW = np.zeros_like(W)
        gU = np.zeros_like(U)
        gB = np.zeros_like(B)
        gX = np.zeros_like(X)
        dh_next = np.zeros((nb, hid), dtype=X.dtype)
        for t in reversed(range(L)):
            h_prev = H[:, t - 1] if t > 0 else np.zeros((nb, hid), dtype=X.dtype)
            z, r, cand = Z[:, t], R[:, t], C[:, t]
            x_t = X[:, t]
            dh = gH[:, t] + dh_next
            dz = dh * (cand - h_prev)
            dh_prev = dh * (1.0 - z)
            da_h = dh * z * (1.0 - cand * cand)
            rh = r * h_prev
            d_rh = da_h @ U[2].T
            gU[2] += rh.T @ da_h
            dr = d_rh * h_prev
            dh_prev += d_rh * r
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            for gate, da in ((0, da_z), (1, da_r), (2, da_h)):
                gW[gate] += x_t.T @ da
                gB[gate] += da.sum(axis=0)
                gX[:, t] += da @ W[gate].T
            gU[0] += h_prev.T @ da_z
            gU[1] += h_prev.T @ da_r
            dh_prev += da_z @ U[0].T + da_r @ U[1].T
            dh_next = dh_prev
        return gX, gW, gU, gB

    return _emit("gru_scan", H, (x, w, u, b), grad)


def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Normalize each channel with statistics over batch and length.

    Returns the output tensor and the (biased) batch mean and variance.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: affine params {gamma.shape}/{beta.shape} do not match {c} channels")
    axes = tuple(range(x.ndim - 1))
    n = x.size // c
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = xhat * gamma.data + beta.data

    def grad(g):
        g_beta = g.sum(axis=axes)
        g_gamma = (g * xhat).sum(axis=axes)
        gx = (gamma.data * inv / n) * (n * g - g_beta - xhat * g_gamma)
        return gx, g_gamma, g_beta

    return _emit("batchnorm_train", out, (x, gamma, beta), grad), mean, var


def batchnorm_infer(x: Tensor, gamma: Tensor, beta: Tensor, mean: np.ndarray, var: np.ndarray, eps: float) -> Tensor:
    axes = tuple(range(x.ndim - 1))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out = xhat * gamma.data + beta.data

    def grad(g):
        return g * gamma.data * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _emit("batchnorm_infer", out, (x, gamma, beta), grad)


def same_padding(length: int, size: int, stride: int) -> tuple[int, int, int]:
    """Output length and (left, right) padding, extra padding on the right."""
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + size - length, 0)
    return out_len, total // 2, total - total // 2


def maxpool1d(x: Tensor, size: int = 2, stride: int = 1) -> Tensor:
    """Windowed max along the length axis with same padding (pads with -inf)."""
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d: expected [b,L,c], got {x.shape}")
    nb, L, c = x.shape
    out_len, left, right = same_padding(L, size, stride)
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)), constant_values=-np.inf)
    starts = np.arange(out_len) * stride
    windows = np.stack([xp[:, starts + j, :] for j in range(size)], axis=0)  # [size,b,out,c]
    arg = windows.argmax(axis=0)  # first max wins ties
    out = np.take_along_axis(windows, arg[None], axis=0)[0]

    def grad(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        src = starts[None, :, None] + arg  # padded index of each winner
        bi = np.arange(nb)[:, None, None]
        ci = np.arange(c)[None, None, :]
        np.add.at(gxp, (bi, src, ci), g)
        return (gxp[:, left:left + L, :],)

    return _emit("maxpool1d", out, (x,), grad)
