"""Frame stem: raw clip ``[3, T, H, W]`` to a token sequence ``[T // 2, C]``.

Pipeline: one-step differential frames, a stage-1 stem on raw and differential
frames, the fused stage-2 stem ``Stem(A) + Stem(A + B)``, pairwise temporal
averaging, a sigmoid-normalised spatial attention mask and spatial average
pooling. Stage-1 blocks pool 4x4 and the stage-2 block 2x2, giving ``H / 8``
overall.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from ssd_pulse.errors import ArgumentError, ShapeError
from ssd_pulse.tensor_core import DTYPE, as_tensor, batchnorm_infer, conv2d, maxpool2d, relu

# frames per conv2d call; bounds temporary memory on long clips
_FRAME_BATCH = 16


@dataclass
class VideoClip:
    """Pre-cropped clip ``data[3, T, H, W]`` with values in [0, 1], sampled at ``fps``."""

    data: np.ndarray
    fps: float

    def __post_init__(self):
        self.data = as_tensor(self.data, ndim=4, name="clip")
        if self.data.shape[0] != 3:
            raise ShapeError(f"clip must have 3 colour channels, got shape {self.data.shape}")
        if self.fps <= 0:
            raise ArgumentError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def validate_for_stem(self) -> None:
        _, t, h, w = self.data.shape
        if t < 4:
            raise ArgumentError(f"clip needs at least 4 frames, got {t}")
        if h < 64 or w < 64 or h % 8 or w % 8:
            raise ShapeError(f"clip spatial size must be >= 64 and divisible by 8, got {h}x{w}")


@dataclass
class StemBlockParams:
    kernel: np.ndarray  # [C_out, C_in, 7, 7]
    bn_mean: np.ndarray
    bn_var: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    pool: int = 2
    eps: float = 1e-5

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]


@dataclass
class StemParams:
    stage1_rgb: StemBlockParams
    stage1_diff: StemBlockParams
    stage2: StemBlockParams
    attn_conv: np.ndarray  # [1, C, 5, 5]


class StemFeatures(NamedTuple):
    features: np.ndarray  # [C, T', H/8, W/8]
    dropped_trailing_frame: bool


def _clip_array(clip) -> np.ndarray:
    return clip.data if isinstance(clip, VideoClip) else as_tensor(clip, ndim=4, name="clip")


def diff_frames(clip) -> np.ndarray:
    """Forward differences ``D[t] = X[t+1] - X[t]``; the last frame repeats ``D[T-2]``."""
    x = _clip_array(clip)
    if x.shape[1] < 2:
        raise ArgumentError(f"differential frames need T >= 2, got {x.shape[1]}")
    d = np.empty_like(x)
    d[:, :-1] = x[:, 1:] - x[:, :-1]
    d[:, -1] = d[:, -2]
    return d


def stem_block(x, params: StemBlockParams) -> np.ndarray:
    """conv 7x7 (pad 3) -> batch norm -> ReLU -> max pool, on ``[C, H, W]`` or ``[N, C, H, W]``.

    The pool window (and stride) is ``params.pool``, 2 unless overridden.
    """
    x = as_tensor(x, ndim=(3, 4), name="stem input")
    pad = params.kernel.shape[-1] // 2
    y = conv2d(x, params.kernel, stride=1, padding=pad)
    axis = 1 if y.ndim == 4 else 0
    y = batchnorm_infer(y, params.bn_mean, params.bn_var, params.bn_gamma, params.bn_beta, params.eps, axis=axis)
    return maxpool2d(relu(y), params.pool, params.pool)


def _stem_frames(frames: np.ndarray, params: StemBlockParams) -> np.ndarray:
    parts = [stem_block(frames[i : i + _FRAME_BATCH], params) for i in range(0, len(frames), _FRAME_BATCH)]
    return np.concatenate(parts, axis=0)


def fuse_stem(clip, params: StemParams) -> StemFeatures:
    """``Stem2(A) + Stem2(A + B)`` with ``A``/``B`` the stage-1 raw/diff features, halved in time."""
    x = _clip_array(clip)
    if isinstance(clip, VideoClip):
        clip.validate_for_stem()
    raw = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    diff = np.ascontiguousarray(diff_frames(x).transpose(1, 0, 2, 3))
    a = _stem_frames(raw, params.stage1_rgb)
    b = _stem_frames(diff, params.stage1_diff)
    fused = _stem_frames(a, params.stage2) + _stem_frames(a + b, params.stage2)

    t = fused.shape[0]
    dropped = t % 2 == 1
    if dropped:
        warnings.warn(f"odd frame count {t}: trailing frame dropped before temporal pairing", stacklevel=2)
        fused = fused[:-1]
    pairs = fused.reshape(t // 2, 2, *fused.shape[1:])
    halved = ((pairs[:, 0] + pairs[:, 1]) * DTYPE(0.5)).astype(DTYPE)
    return StemFeatures(np.ascontiguousarray(halved.transpose(1, 0, 2, 3)), dropped)


def attention_mask(x, attn_conv, sigmoid: bool = True) -> np.ndarray:
    """Spatial attention mask ``[1, T', h, w]`` whose per-frame sum is ``h * w / 2``.

    ``mask = h*w * s / (2 * ||s||_1)`` with ``s = sigmoid(conv5x5(x))``.
    With ``sigmoid=False`` the raw conv response is normalised instead.
    """
    x = as_tensor(x, ndim=4, name="stem features")
    attn_conv = as_tensor(attn_conv, ndim=4, name="attention conv")
    if attn_conv.shape[:2] != (1, x.shape[0]):
        raise ShapeError(f"attention conv {attn_conv.shape} must map {x.shape[0]} channels to 1")
    _, t, h, w = x.shape
    frames = np.ascontiguousarray(x.transpose(1, 0, 2, 3))
    z = conv2d(frames, attn_conv, stride=1, padding=attn_conv.shape[-1] // 2).astype(np.float64)  # [T', 1, h, w]
    if sigmoid:
        # log-space normalisation: sigmoid underflows to 0 for very negative
        # responses, but s / ||s||_1 stays well defined
        log_s = -np.logaddexp(0.0, -z)
        log_norm = logsumexp(log_s, axis=(1, 2, 3), keepdims=True)
        mask = (h * w / 2.0) * np.exp(log_s - log_norm)
    else:
        norm = np.maximum(np.abs(z).sum(axis=(1, 2, 3), keepdims=True), np.finfo(np.float64).tiny)
        mask = (h * w) * z / (2.0 * norm)
    return np.ascontiguousarray(mask.transpose(1, 0, 2, 3)).astype(DTYPE)


def frame_stem_forward(clip, params: StemParams, sigmoid: bool = True) -> np.ndarray:
    """Full stem: returns tokens ``[T // 2, C]``."""
    feats = fuse_stem(clip, params).features
    mask = attention_mask(feats, params.attn_conv, sigmoid=sigmoid)
    attended = feats.astype(np.float64) * mask.astype(np.float64)
    pooled = attended.mean(axis=(2, 3))  # [C, T']
    return np.ascontiguousarray(pooled.T).astype(DTYPE)
