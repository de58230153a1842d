"""Seeded synthetic BVP waveforms and face-like video clips with known heart rate.

Randomness comes from numpy's ``PCG64`` bit generator (128-bit LCG state,
XSL-RR output permutation, 64-bit outputs), seeded with the integer
``SynthSpec.seed``. Gaussian draws use ``Generator.standard_normal``.
Draw order per call: harmonic phase, BVP noise, motion phases, pixel noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import detrend

from ssd_pulse.dsp import BvpSignal
from ssd_pulse.errors import ArgumentError
from ssd_pulse.stem import VideoClip

MODULATION_DEPTH = 0.01
# face/background colours (R, G, B) in [0, 1]
SKIN_RGB = (0.78, 0.57, 0.47)
BACKGROUND_RGB = (0.25, 0.25, 0.28)


@dataclass(frozen=True)
class SynthSpec:
    hr_bpm: float = 72.0
    fps: float = 30.0
    duration_s: float = 10.0
    noise_std: float = 0.0
    motion_amp: float = 0.0
    harmonic_ratio: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 45.0 <= self.hr_bpm <= 150.0:
            raise ArgumentError(f"hr_bpm must be in [45, 150], got {self.hr_bpm}")
        if self.fps <= 0 or self.duration_s <= 0:
            raise ArgumentError("fps and duration_s must be positive")
        if self.noise_std < 0 or self.motion_amp < 0:
            raise ArgumentError("noise_std and motion_amp must be non-negative")
        if not 0.0 <= self.harmonic_ratio <= 1.0:
            raise ArgumentError(f"harmonic_ratio must be in [0, 1], got {self.harmonic_ratio}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fps))

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(spec: SynthSpec) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(spec.seed))


def _waveform(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Clean waveform and additive noise, drawn in the documented order."""
    t = np.arange(spec.n_samples) / spec.fps
    f = spec.hr_bpm / 60.0
    phase = rng.uniform(0.0, 2.0 * np.pi)
    clean = np.sin(2 * np.pi * f * t) + spec.harmonic_ratio * np.sin(4 * np.pi * f * t + phase)
    noise = spec.noise_std * rng.standard_normal(t.size)
    return clean, noise


def gen_bvp(spec: SynthSpec) -> BvpSignal:
    """``sin(2 pi f t) + r sin(4 pi f t + phi) + N(0, noise_std)`` at ``spec.fps``."""
    clean, noise = _waveform(spec, _rng(spec))
    return BvpSignal(clean + noise, spec.fps)


def face_mask(size: int) -> np.ndarray:
    """Boolean centred ellipse (semi-axes 0.3 x 0.38 of the frame)."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    return ((xx - c) / (0.3 * size)) ** 2 + ((yy - c) / (0.38 * size)) ** 2 <= 1.0


def gen_video(spec: SynthSpec, size: int = 128, modulation: float = MODULATION_DEPTH) -> tuple[VideoClip, BvpSignal]:
    """Clip ``[3, T, size, size]`` whose face green channel follows ``modulation * bvp(t)``.

    The face is modulated by the noisy waveform (``noise_std`` acts as
    physiological/illumination noise), each pixel gets sensor noise of std
    ``modulation * noise_std``, and the whole frame is translated by integer
    offsets of amplitude ``motion_amp``. Returns the clip and the clean label.
    """
    rng = _rng(spec)
    clean, noise = _waveform(spec, rng)
    pulse = modulation * (clean + noise)
    n = clean.size

    mask = face_mask(size)
    base = np.empty((3, size, size), dtype=np.float32)
    for ch in range(3):
        base[ch] = np.where(mask, SKIN_RGB[ch], BACKGROUND_RGB[ch])

    frames = np.broadcast_to(base[:, None], (3, n, size, size)).copy()
    frames[1] += (pulse[:, None, None] * mask[None]).astype(np.float32)

    motion_phase = rng.uniform(0.0, 2.0 * np.pi, size=4)
    if spec.motion_amp > 0:
        t = np.arange(n) / spec.fps
        dx = np.rint(spec.motion_amp * np.sin(2 * np.pi * 0.23 * t + motion_phase[0])).astype(int)
        dy = np.rint(spec.motion_amp * np.sin(2 * np.pi * 0.41 * t + motion_phase[1])).astype(int)
        for i in range(n):
            if dx[i] or dy[i]:
                frames[:, i] = _translate(frames[:, i], dy[i], dx[i], BACKGROUND_RGB)

    if spec.noise_std > 0:
        sensor = rng.standard_normal(frames.shape, dtype=np.float32)
        sensor *= np.float32(modulation * spec.noise_std)
        frames += sensor
        del sensor
    np.clip(frames, 0.0, 1.0, out=frames)
    return VideoClip(frames, spec.fps), BvpSignal(clean, spec.fps)


def _translate(frame: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    out = np.empty_like(frame)
    for ch in range(frame.shape[0]):
        out[ch] = fill[ch]
    h, w = frame.shape[1:]
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[:, dst_y, dst_x] = frame[:, src_y, src_x]
    return out


def region_mean_trace(clip: VideoClip, mask: np.ndarray | None = None) -> BvpSignal:
    """Mean green intensity inside the face ellipse per frame, linearly detrended."""
    g = clip.data[1].astype(np.float64)
    if mask is None:
        mask = face_mask(g.shape[-1])
    trace = g[:, mask].mean(axis=1)
    return BvpSignal(detrend(trace), clip.fps)
