"""
Differentiable image operators: convolution, transposed convolution, ReLU,
instance normalization, and the min-pool/channel-min pair behind the dark
channel.

Kernels use the (out_channels, in_channels, kh, kw) layout for both conv2d and
conv_transpose2d, so conv_transpose2d(y, k) is the adjoint of conv2d(., k).
"""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import ShapeError, check_odd_patch
from .tensor import DTYPE, Tensor4, record


# ---------------------------------------------------------------------------
# Convolution kernels on raw arrays
# ---------------------------------------------------------------------------


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(n, c, oh, ow, kh, kw) view of every kernel-sized patch."""
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _conv_forward(xp: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    _, _, kh, kw = kernel.shape
    cols = _windows(xp, kh, kw, stride)
    out = np.tensordot(cols, kernel, axes=([1, 4, 5], [1, 2, 3]))  # (n, oh, ow, o)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_input_grad(grad: np.ndarray, kernel: np.ndarray, stride: int, padded_shape: Tuple[int, ...]) -> np.ndarray:
    """Scatter output gradients back onto the (padded) input grid."""
    _, _, kh, kw = kernel.shape
    _, _, oh, ow = grad.shape
    dcols = np.tensordot(grad, kernel, axes=([1], [0]))  # (n, oh, ow, c, kh, kw)
    dxp = np.zeros(padded_shape, dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp


def _conv_kernel_grad(xp: np.ndarray, grad: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    _, _, oh, ow = grad.shape
    cols = _windows(xp, kh, kw, stride)[:, :, :oh, :ow]
    return np.tensordot(grad, cols, axes=([0, 2, 3], [0, 2, 3]))  # (o, c, kh, kw)


def _check_bias(bias: Optional[Tensor4], channels: int, op: str) -> None:
    if bias is not None and bias.shape != (1, channels, 1, 1):
        raise ShapeError(f"{op}: bias shape {bias.shape} does not match (1, {channels}, 1, 1)")


# ---------------------------------------------------------------------------
# Public operators
# ---------------------------------------------------------------------------


def conv2d(x: Tensor4, kernel: Tensor4, bias: Optional[Tensor4] = None, stride: int = 1, padding: int = 0) -> Tensor4:
    """2D cross-correlation with zero padding."""
    n, c, h, w = x.shape
    out_c, in_c, kh, kw = kernel.shape
    if in_c != c:
        raise ShapeError(f"conv2d: kernel {kernel.shape} expects {in_c} input channels, input {x.shape} has {c}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} padding={padding}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d: input {x.shape} with kernel {kernel.shape}, stride {stride}, padding {padding} gives an empty output")
    _check_bias(bias, out_c, "conv2d")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    out = _conv_forward(xp, kernel.data, stride)
    if bias is not None:
        out = out + bias.data

    def _backward(g: np.ndarray):
        dxp = _conv_input_grad(g, kernel.data, stride, xp.shape)
        dx = dxp[:, :, padding : padding + h, padding : padding + w] if padding else dxp
        dk = _conv_kernel_grad(xp, g, kh, kw, stride) if kernel.requires_grad else None
        db = g.sum(axis=(0, 2, 3), keepdims=True) if bias is not None else None
        return dx, dk, db

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record("conv2d", out, inputs, _backward)


def conv_transpose2d(x: Tensor4, kernel: Tensor4, bias: Optional[Tensor4] = None, stride: int = 1) -> Tensor4:
    """Transposed convolution; output spatial size is (h - 1) * stride + k."""
    n, c, h, w = x.shape
    k_out, k_in, kh, kw = kernel.shape
    if k_out != c:
        raise ShapeError(f"conv_transpose2d: kernel {kernel.shape} expects {k_out} input channels, input {x.shape} has {c}")
    if stride < 1:
        raise ShapeError(f"conv_transpose2d: invalid stride={stride}")
    _check_bias(bias, k_in, "conv_transpose2d")

    out_shape = (n, k_in, (h - 1) * stride + kh, (w - 1) * stride + kw)
    out = _conv_input_grad(x.data, kernel.data, stride, out_shape)
    if bias is not None:
        out = out + bias.data

    def _backward(g: np.ndarray):
        dx = _conv_forward(g, kernel.data, stride)
        dk = _conv_kernel_grad(g, x.data, kh, kw, stride) if kernel.requires_grad else None
        db = g.sum(axis=(0, 2, 3), keepdims=True) if bias is not None else None
        return dx, dk, db

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return record("conv_transpose2d", out, inputs, _backward)


def relu(x: Tensor4) -> Tensor4:
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def instance_norm(x: Tensor4, eps: float = 1e-5) -> Tensor4:
    """Normalize every (sample, channel) slice to zero mean and unit variance."""
    _, _, h, w = x.shape
    count = h * w
    if count < 2:
        raise ShapeError(f"instance_norm needs at least 2 pixels per slice, got {h}x{w}")
    mean = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mean
    var = (centered**2).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def _backward(g: np.ndarray):
        g_sum = g.sum(axis=(2, 3), keepdims=True)
        gx_sum = (g * xhat).sum(axis=(2, 3), keepdims=True)
        return (inv_std / count * (count * g - g_sum - xhat * gx_sum),)

    return record("instance_norm", xhat, (x,), _backward)


class ArgminMap:
    """Lookup table of the input coordinate that won each min-pool output.

    ``rows`` and ``cols`` have the output's shape and index into the input's
    spatial grid; batch and channel are implied by position.
    """

    def __init__(self, rows: np.ndarray, cols: np.ndarray):
        self.rows = rows
        self.cols = cols

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.rows.shape

    def coordinates(self, n: int = 0, c: int = 0) -> np.ndarray:
        """(h, w, 2) array of winning (row, col) per output pixel."""
        return np.stack([self.rows[n, c], self.cols[n, c]], axis=-1)

    def scatter(self, grad: np.ndarray) -> np.ndarray:
        out = np.zeros(grad.shape, dtype=DTYPE)
        n_idx, c_idx = np.indices(grad.shape[:2])
        n_idx = np.broadcast_to(n_idx[:, :, None, None], grad.shape)
        c_idx = np.broadcast_to(c_idx[:, :, None, None], grad.shape)
        np.add.at(out, (n_idx, c_idx, self.rows, self.cols), grad)
        return out


def minpool_patch(x: Tensor4, patch: int = 3) -> Tuple[Tensor4, ArgminMap]:
    """Stride-1 min filter with replicate border padding.

    Ties resolve to the patch center when it attains the minimum, otherwise to
    the first minimum in row-major order over the patch.
    """
    check_odd_patch(patch)
    n, c, h, w = x.shape
    r = patch // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    flat = sliding_window_view(xp, (patch, patch), axis=(2, 3)).reshape(n, c, h, w, patch * patch)

    center = (patch * patch) // 2
    best = flat.argmin(axis=-1)
    out = np.take_along_axis(flat, best[..., None], axis=-1)[..., 0]
    best = np.where(flat[..., center] == out, center, best)

    grid_r, grid_c = np.indices((h, w))
    rows = np.clip(grid_r + best // patch - r, 0, h - 1)
    cols = np.clip(grid_c + best % patch - r, 0, w - 1)
    table = ArgminMap(rows, cols)

    pooled = record("minpool_patch", np.ascontiguousarray(out), (x,), lambda g: (table.scatter(g),))
    return pooled, table


def channel_min(x: Tensor4) -> Tensor4:
    """Minimum over channels, shape (n, 1, h, w); ties go to the lowest channel."""
    best = x.data.argmin(axis=1)[:, None]
    out = np.take_along_axis(x.data, best, axis=1)

    def _backward(g: np.ndarray):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, best, g, axis=1)
        return (full,)

    return record("channel_min", out, (x,), _backward)
