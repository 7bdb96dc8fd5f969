"""Vectorized numpy fallback for the conv kernels.

im2col formulation: the k*k patch gather turns the convolution into one
matmul, and the backward passes reuse the same column layout. All arrays
are float64 and C-contiguous; shape validation happens in the caller.
"""

import numpy as np

BACKEND = "numpy"


def _out_hw(H, W, k, stride, pad):
    return (H + 2 * pad - k) // stride + 1, (W + 2 * pad - k) // stride + 1


def _im2col(xp, k, stride, Ho, Wo):
    C = xp.shape[0]
    cols = np.empty((C, k, k, Ho, Wo), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            cols[:, kh, kw] = xp[:, kh : kh + Ho * stride : stride, kw : kw + Wo * stride : stride]
    return cols


def conv2d_forward(x, w, b, stride, pad):
    C, H, W = x.shape
    F, _, k, _ = w.shape
    Ho, Wo = _out_hw(H, W, k, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, stride, Ho, Wo)
    y = w.reshape(F, -1) @ cols.reshape(C * k * k, Ho * Wo)
    y += b[:, None]
    return np.ascontiguousarray(y.reshape(F, Ho, Wo))


def conv2d_grad_input(w, gy, x_shape, stride, pad):
    C, H, W = x_shape
    F, _, k, _ = w.shape
    _, Ho, Wo = gy.shape
    gcols = (w.reshape(F, -1).T @ gy.reshape(F, -1)).reshape(C, k, k, Ho, Wo)
    gxp = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            gxp[:, kh : kh + Ho * stride : stride, kw : kw + Wo * stride : stride] += gcols[:, kh, kw]
    if pad:
        return np.ascontiguousarray(gxp[:, pad : pad + H, pad : pad + W])
    return gxp


def conv2d_grad_kernel(x, gy, w_shape, stride, pad):
    C, H, W = x.shape
    F, _, k, _ = w_shape
    _, Ho, Wo = gy.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, stride, Ho, Wo)
    gw = gy.reshape(F, -1) @ cols.reshape(C * k * k, Ho * Wo).T
    return np.ascontiguousarray(gw.reshape(F, C, k, k))
