"""Dense numerical kernels over float32 arrays.

Every kernel validates shapes explicitly instead of relying on numpy
broadcasting, accumulates in float64 and returns float32. Reductions run in
a fixed order so repeated calls are bit-identical.
"""
from __future__ import annotations

import numpy as np

from ssd_pulse.errors import ArgumentError, ShapeError

DTYPE = np.float32
_IM2COL_BYTES = 64 * 2**20


def as_tensor(x, *, ndim: int | tuple[int, ...] | None = None, name: str = "tensor") -> np.ndarray:
    """Coerce ``x`` to a contiguous float32 array and check its rank."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if ndim is not None:
        allowed = (ndim,) if isinstance(ndim, int) else ndim
        if arr.ndim not in allowed:
            raise ShapeError(f"{name}: expected rank in {allowed}, got shape {arr.shape}")
    if arr.ndim == 0 or any(d < 1 for d in arr.shape):
        raise ShapeError(f"{name}: every dimension must be >= 1, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product of ``a[m, k]`` and ``b[k, n]`` with float64 accumulation."""
    a = as_tensor(a, ndim=2, name="matmul lhs")
    b = as_tensor(b, ndim=2, name="matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    out = a.astype(np.float64) @ b.astype(np.float64)
    return out.astype(DTYPE)


def _conv_out_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"conv: input size {size} with kernel {k}, stride {stride}, padding {padding} "
            "does not give an integral output size"
        )
    return span // stride + 1


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``x`` is ``[C_in, H, W]`` or a frame batch ``[N, C_in, H, W]``;
    ``kernel`` is ``[C_out, C_in, k, k]`` with odd ``k``.
    """
    x = as_tensor(x, ndim=(3, 4), name="conv2d input")
    kernel = as_tensor(kernel, ndim=4, name="conv2d kernel")
    batched = x.ndim == 4
    xb = x if batched else x[None]
    n, c_in, h, w = xb.shape
    c_out, kc_in, kh, kw = kernel.shape
    if kc_in != c_in:
        raise ShapeError(f"conv2d: kernel expects {kc_in} input channels, input {x.shape} has {c_in}")
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd-sized, got {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ArgumentError(f"conv2d: invalid stride={stride} / padding={padding}")
    ho = _conv_out_size(h, kh, stride, padding)
    wo = _conv_out_size(w, kw, stride, padding)

    k64 = kernel.astype(np.float64)
    # im2col per frame group; bounds the patch buffer to ~64 MB
    per_frame = c_in * kh * kw * ho * wo * 8
    group = max(1, _IM2COL_BYTES // per_frame)
    out = np.empty((n, c_out, ho, wo), dtype=DTYPE)
    for start in range(0, n, group):
        xp = np.pad(
            xb[start : start + group].astype(np.float64),
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
        )
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        win = win[:, :, ::stride, ::stride]  # [g, C_in, H', W', k, k]
        acc = np.tensordot(k64, win, axes=([1, 2, 3], [1, 4, 5]))  # [C_out, g, H', W']
        out[start : start + group] = acc.transpose(1, 0, 2, 3)
    return out if batched else out[0]


def conv1d(x, kernel, padding: int = 0) -> np.ndarray:
    """1-D cross-correlation of ``x[C_in, L]`` with ``kernel[C_out, C_in, k]``, stride 1."""
    x = as_tensor(x, ndim=2, name="conv1d input")
    kernel = as_tensor(kernel, ndim=3, name="conv1d kernel")
    c_out, c_in, k = kernel.shape
    if x.shape[0] != c_in:
        raise ShapeError(f"conv1d: kernel {kernel.shape} does not match input {x.shape}")
    lo = _conv_out_size(x.shape[1], k, 1, padding)
    xp = np.pad(x.astype(np.float64), ((0, 0), (padding, padding)))
    k64 = kernel.astype(np.float64)
    out = np.zeros((c_out, lo), dtype=np.float64)
    for d in range(k):
        out += k64[:, :, d] @ xp[:, d : d + lo]
    return out.astype(DTYPE)


def maxpool2d(x, k: int, stride: int) -> np.ndarray:
    """Per-window maximum over the last two axes of ``[C, H, W]`` or ``[N, C, H, W]``."""
    x = as_tensor(x, ndim=(3, 4), name="maxpool2d input")
    h, w = x.shape[-2:]
    if k < 1 or stride < 1:
        raise ArgumentError(f"maxpool2d: invalid window {k} / stride {stride}")
    if h < k or w < k:
        raise ShapeError(f"maxpool2d: window {k} larger than input {x.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(-2, -1))
    windows = windows[..., ::stride, ::stride, :, :]
    return np.ascontiguousarray(windows.max(axis=(-2, -1)))


def batchnorm_infer(x, mean, var, gamma, beta, eps: float = 1e-5, axis: int = 0) -> np.ndarray:
    """Inference batch norm with stored statistics along channel ``axis``."""
    x = as_tensor(x, name="batchnorm input")
    c = x.shape[axis]
    stats = []
    for label, v in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (c,):
            raise ShapeError(f"batchnorm: {label} has shape {v.shape}, input {x.shape} has {c} channels")
        stats.append(v)
    mean, var, gamma, beta = stats
    if eps < 0 or np.any(var < 0):
        raise ArgumentError("batchnorm: eps and var must be non-negative")
    shape = [1] * x.ndim
    shape[axis] = c
    scale = (gamma / np.sqrt(var + eps)).reshape(shape)
    out = (x.astype(np.float64) - mean.reshape(shape)) * scale + beta.reshape(shape)
    return out.astype(DTYPE)


def relu(x) -> np.ndarray:
    x = as_tensor(x)
    return np.maximum(x, DTYPE(0))
