"""Multi-temporal segment views and the frequency-domain feed-forward block."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ssd_pulse.errors import ArgumentError, ShapeError
from ssd_pulse.tensor_core import DTYPE, as_tensor, irfft64, rfft64

N_VIEWS = 4


@dataclass
class MultiTemporalViews:
    """Four tilings of one token sequence into segments of length ``T / 2**k``.

    ``views[k]`` holds the (possibly processed) tokens of view ``k`` in the
    original order; ``segment_lens[k]`` is the tiling used for it.
    ``original_len`` is the sequence length before edge-replication padding.
    """

    views: list[np.ndarray]
    segment_lens: list[int]
    original_len: int
    padded: int = 0
    meta: dict = field(default_factory=dict)

    def segments(self, k: int) -> list[np.ndarray]:
        seg = self.segment_lens[k]
        v = self.views[k]
        return [v[i : i + seg] for i in range(0, v.shape[0], seg)]

    def map_segments(self, fn: Callable[[int, int, np.ndarray], np.ndarray]) -> "MultiTemporalViews":
        """Apply ``fn(view, segment_index, segment)`` to every segment independently."""
        out = []
        for k in range(len(self.views)):
            parts = [fn(k, i, s) for i, s in enumerate(self.segments(k))]
            out.append(np.concatenate(parts, axis=0))
        return replace(self, views=out)


def multi_temporal_views(tokens) -> MultiTemporalViews:
    """Tile ``tokens[T', C]`` with segment lengths ``[T', T'/2, T'/4, T'/8]``.

    ``T'`` not divisible by 8 is padded at the end by repeating the last token.
    """
    x = as_tensor(tokens, ndim=2, name="tokens")
    t = x.shape[0]
    if t < 8:
        raise ArgumentError(f"multi-temporal views need at least 8 tokens, got {t}")
    pad = (-t) % 8
    if pad:
        x = np.concatenate([x, np.repeat(x[-1:], pad, axis=0)], axis=0)
    total = x.shape[0]
    lens = [total >> k for k in range(N_VIEWS)]
    return MultiTemporalViews([x.copy() for _ in range(N_VIEWS)], lens, t, pad, {"padded_tokens": pad})


def recombine_views(processed: MultiTemporalViews) -> np.ndarray:
    """Elementwise mean of the aligned views, cropped to the original length."""
    views = processed.views
    if len(views) != N_VIEWS:
        raise ShapeError(f"expected {N_VIEWS} views, got {len(views)}")
    shape = views[0].shape
    for v in views[1:]:
        if v.shape != shape:
            raise ShapeError(f"view shapes disagree: {shape} vs {v.shape}")
    total = views[0]
    for v in views[1:]:
        total = total + v
    mean = (total / DTYPE(N_VIEWS)).astype(DTYPE)
    return np.ascontiguousarray(mean[: processed.original_len])


@dataclass
class FdfParams:
    """Complex-linear channel mixing ``(w_re + i w_im)`` applied per frequency bin."""

    w_re: np.ndarray
    w_im: np.ndarray

    def check(self, channels: int) -> None:
        for name in ("w_re", "w_im"):
            if np.shape(getattr(self, name)) != (channels, channels):
                raise ShapeError(f"FdfParams.{name} must be {channels}x{channels}, got {np.shape(getattr(self, name))}")


def fdf_forward(tokens, params: FdfParams) -> np.ndarray:
    """rfft over time per channel, complex channel mix, irfft back, plus the residual input."""
    x = as_tensor(tokens, ndim=2, name="tokens")
    t, c = x.shape
    if t < 2:
        raise ArgumentError(f"FDF needs at least 2 tokens, got {t}")
    params.check(c)
    spec = rfft64(x.T).T  # [F, C]
    w_re = np.asarray(params.w_re, dtype=np.float64)
    w_im = np.asarray(params.w_im, dtype=np.float64)
    re = spec.real @ w_re - spec.imag @ w_im
    im = spec.real @ w_im + spec.imag @ w_re
    back = irfft64((re + 1j * im).T, t).T  # [T, C]
    return (back + x.astype(np.float64)).astype(DTYPE)
