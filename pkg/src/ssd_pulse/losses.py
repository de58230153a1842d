"""Time- and frequency-domain losses on predicted waveforms (evaluation only, no gradients)."""
from __future__ import annotations

import numpy as np

from ssd_pulse.dsp import HR_BAND, MIN_NFFT, BvpSignal, pearson_r
from ssd_pulse.errors import ArgumentError
from ssd_pulse.tensor_core import rfft64


def loss_time(pred: BvpSignal, label: BvpSignal) -> float:
    """Negative Pearson correlation between prediction and label."""
    if len(pred) != len(label):
        raise ArgumentError(f"length mismatch: {len(pred)} vs {len(label)}")
    return -pearson_r(pred.samples, label.samples)


def band_periodogram(sig: BvpSignal, band=HR_BAND, nfft: int = MIN_NFFT) -> tuple[np.ndarray, np.ndarray]:
    """Mean-removed periodogram zero-padded to ``nfft`` points, restricted to ``band``."""
    x = sig.samples - sig.samples.mean()
    nfft = max(nfft, x.size)
    padded = np.zeros(nfft)
    padded[: x.size] = x
    spec = rfft64(padded)
    power = (spec.real**2 + spec.imag**2) / x.size
    freqs = np.arange(power.size) * sig.fs / nfft
    sel = (freqs >= band[0]) & (freqs <= band[1])
    if not np.any(sel):
        raise ArgumentError(f"no periodogram bins inside {band} Hz")
    return freqs[sel], power[sel]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max()
    return z - m - np.log(np.exp(z - m).sum())


def loss_freq(pred: BvpSignal, label_hr_bpm: float, band=HR_BAND) -> float:
    """Cross-entropy of the in-band periodogram (as logits) against the label HR bin."""
    if len(pred) < 32:
        raise ArgumentError(f"frequency loss needs >= 32 samples, got {len(pred)}")
    f0 = label_hr_bpm / 60.0
    if not band[0] <= f0 <= band[1]:
        raise ArgumentError(f"label HR {label_hr_bpm} bpm outside band {band} Hz")
    freqs, power = band_periodogram(pred, band)
    target = int(np.argmin(np.abs(freqs - f0)))
    return float(-_log_softmax(power)[target])


def label_hr(label: BvpSignal, band=HR_BAND) -> float:
    """Label HR in bpm from the peak of its in-band periodogram."""
    freqs, power = band_periodogram(label, band)
    return 60.0 * float(freqs[np.argmax(power)])


def loss_overall(pred: BvpSignal, label: BvpSignal, label_hr_bpm: float | None = None) -> float:
    """Unweighted sum ``loss_time + loss_freq``."""
    if label_hr_bpm is None:
        label_hr_bpm = label_hr(label)
    return loss_time(pred, label) + loss_freq(pred, label_hr_bpm)
