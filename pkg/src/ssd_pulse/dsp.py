"""Evaluation-side signal processing and heart-rate metrics.

The evaluation chain is: zero-phase Butterworth bandpass (0.75-2.5 Hz),
Welch PSD with a zero-padded FFT, spectral peak picking inside the pulse band,
and SNR of the prediction's PSD around the reference heart rate.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps

from ssd_pulse.errors import ArgumentError, CorrelationError
from ssd_pulse.tensor_core import rfft64

HR_BAND = (0.75, 2.5)
SNR_BAND = (0.6, 3.3)
SNR_WINDOW_HZ = 0.1
MIN_NFFT = 2048


@dataclass
class BvpSignal:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.fs <= 0:
            raise ArgumentError(f"sampling frequency must be positive, got {self.fs}")
        if self.samples.size < 2:
            raise ArgumentError("a signal needs at least 2 samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs


@dataclass
class PsdEstimate:
    freqs: np.ndarray
    power: np.ndarray

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])


@dataclass
class MetricsReport:
    mae: float
    rmse: float
    mape: float
    pearson_r: float
    snr_db: float

    def to_dict(self) -> dict:
        return asdict(self)


def butter_bandpass_coeffs(low: float, high: float, fs: float, order: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Digital Butterworth bandpass ``(b, a)`` with ``a[0] == 1``.

    Analog lowpass prototype, lowpass-to-bandpass transform at pre-warped
    edges, then the bilinear transform. ``order`` is the prototype order, so
    the digital filter has ``2 * order`` poles.
    """
    if not 0 < low < high < fs / 2:
        raise ArgumentError(f"band [{low}, {high}] Hz must satisfy 0 < low < high < fs/2 = {fs / 2}")
    if order < 1:
        raise ArgumentError(f"order must be >= 1, got {order}")
    fs2 = 2.0 * fs
    w_lo = fs2 * math.tan(math.pi * low / fs)
    w_hi = fs2 * math.tan(math.pi * high / fs)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    proto = np.exp(1j * np.pi * (2 * np.arange(1, order + 1) + order - 1) / (2 * order))
    # each prototype pole p maps to the roots of s^2 - p*bw*s + w0^2
    pb = proto * bw / 2
    root = np.sqrt(pb * pb - w0_sq)
    poles = np.concatenate([pb + root, pb - root])
    gain = bw**order

    z_poles = (fs2 + poles) / (fs2 - poles)
    z_zeros = np.concatenate([np.ones(order), -np.ones(order)])  # s=0 -> z=1, s=inf -> z=-1
    gain_z = gain * np.real(fs2**order / np.prod(fs2 - poles))
    b = gain_z * np.real(np.poly(z_zeros))
    a = np.real(np.poly(z_poles))
    return b, a


def freq_response(b, a, freqs, fs: float) -> np.ndarray:
    """Complex ``H(e^{j w})`` of ``b/a`` at ``freqs`` (Hz)."""
    z_inv = np.exp(-2j * np.pi * np.asarray(freqs, dtype=np.float64) / fs)
    num = np.polyval(np.asarray(b)[::-1], z_inv)
    den = np.polyval(np.asarray(a)[::-1], z_inv)
    return num / den


def filtfilt(sig: BvpSignal, b, a) -> BvpSignal:
    """Zero-phase forward-backward filtering with odd-reflection edge padding."""
    b = np.asarray(b, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    x = sig.samples
    edge = 3 * (max(b.size, a.size) - 1)
    if x.size <= edge:
        raise ArgumentError(f"signal of length {x.size} too short for filtfilt (needs > {edge})")
    if edge:
        head = 2 * x[0] - x[edge:0:-1]
        tail = 2 * x[-1] - x[-2 : -edge - 2 : -1]
        ext = np.concatenate([head, x, tail])
    else:
        ext = x
    zi = sps.lfilter_zi(b, a)
    y, _ = sps.lfilter(b, a, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = sps.lfilter(b, a, y, zi=zi * y[0])
    y = y[::-1]
    if edge:
        y = y[edge:-edge]
    return BvpSignal(y, sig.fs)


def bandpass(sig: BvpSignal, band=HR_BAND, order: int = 2) -> BvpSignal:
    b, a = butter_bandpass_coeffs(band[0], band[1], sig.fs, order)
    return filtfilt(sig, b, a)


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(sig: BvpSignal, nperseg: int | None = None, overlap: float = 0.5, nfft: int | None = None) -> PsdEstimate:
    """One-sided Welch PSD density (units^2/Hz), Hann window, no detrending.

    ``nperseg`` defaults to ``min(256, len)``; the FFT is zero-padded to at
    least 2048 points.
    """
    x = sig.samples
    if nperseg is None:
        nperseg = min(256, x.size)
    if nperseg < 8:
        raise ArgumentError(f"nperseg must be >= 8, got {nperseg}")
    if nperseg > x.size:
        raise ArgumentError(f"nperseg={nperseg} exceeds signal length {x.size}")
    if not 0 <= overlap < 1:
        raise ArgumentError(f"overlap must be in [0, 1), got {overlap}")
    if nfft is None:
        nfft = max(MIN_NFFT, 1 << (nperseg - 1).bit_length())
    if nfft < nperseg:
        raise ArgumentError(f"nfft={nfft} smaller than nperseg={nperseg}")
    step = nperseg - int(nperseg * overlap)
    win = hann_periodic(nperseg)
    starts = range(0, x.size - nperseg + 1, step)
    frames = np.stack([x[s : s + nperseg] * win for s in starts])
    padded = np.zeros((frames.shape[0], nfft))
    padded[:, :nperseg] = frames
    spec = rfft64(padded)
    power = (spec.real**2 + spec.imag**2).mean(axis=0) / (sig.fs * np.sum(win * win))
    if nfft % 2 == 0:
        power[1:-1] *= 2
    else:
        power[1:] *= 2
    freqs = np.arange(power.size) * sig.fs / nfft
    return PsdEstimate(freqs, power)


def estimate_hr(psd: PsdEstimate, band=HR_BAND) -> float:
    """Heart rate (bpm) at the PSD peak inside ``band``; ties go to the lower frequency."""
    lo, hi = band
    sel = (psd.freqs >= lo) & (psd.freqs <= hi)
    if not np.any(sel):
        raise ArgumentError(f"band [{lo}, {hi}] Hz contains no PSD bins")
    idx = np.flatnonzero(sel)
    return 60.0 * float(psd.freqs[idx[np.argmax(psd.power[idx])]])


def snr_psd(sig: BvpSignal) -> PsdEstimate:
    """Full-length Hann periodogram used for SNR scoring."""
    return welch_psd(sig, nperseg=max(8, len(sig)))


def snr_db(pred: BvpSignal, gt_hr: float, band=SNR_BAND, window_hz: float = SNR_WINDOW_HZ, psd: PsdEstimate | None = None) -> float:
    """Power near the reference HR and its first harmonic over remaining in-band power, in dB.

    The default PSD is a single Hann-windowed periodogram over the whole
    signal (zero-padded to >= 2048 points). Its main lobe is narrow enough to
    fit inside the +-0.1 Hz windows once the signal spans ~20 s, whereas
    256-sample Welch segments smear a tone well past them.
    Returns ``math.inf`` when no power lies outside the windows.
    """
    f0 = gt_hr / 60.0
    if not band[0] <= f0 <= band[1]:
        raise ArgumentError(f"reference HR {gt_hr} bpm ({f0:.3f} Hz) outside band {band}")
    if psd is None:
        psd = snr_psd(pred)
    f = psd.freqs
    in_window = (np.abs(f - f0) <= window_hz) | (np.abs(f - 2 * f0) <= window_hz)
    in_band = (f >= band[0]) & (f <= band[1])
    signal_power = float(psd.power[in_window].sum())
    noise_power = float(psd.power[in_band & ~in_window].sum())
    if noise_power <= 0.0:
        return math.inf
    if signal_power <= 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_power / noise_power)


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size or x.size < 2:
        raise ArgumentError(f"pearson_r needs equal lengths >= 2, got {x.size} and {y.size}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise CorrelationError("correlation undefined for a constant vector")
    # sqrt(fl(a*a)) == a exactly, so r(x, x) is exactly 1
    return float(np.clip(float(xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))


def metrics_report(pred_hrs, gt_hrs, snrs, strict_r: bool = True) -> MetricsReport:
    """MAE/RMSE (bpm), MAPE (%), Pearson r of the HR vectors and mean SNR (dB).

    With ``strict_r=False`` an undefined correlation is reported as NaN
    instead of raising :class:`CorrelationError`.
    """
    pred = np.asarray(pred_hrs, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt_hrs, dtype=np.float64).reshape(-1)
    snr = np.asarray(snrs, dtype=np.float64).reshape(-1)
    if pred.size == 0 or pred.size != gt.size or snr.size != pred.size:
        raise ArgumentError(f"metric vectors must be non-empty and equal length: {pred.size}, {gt.size}, {snr.size}")
    if np.any(gt <= 0):
        raise ArgumentError("MAPE needs strictly positive reference heart rates")
    err = pred - gt
    try:
        r = pearson_r(pred, gt)
    except ArgumentError:
        if strict_r:
            raise
        r = math.nan
    return MetricsReport(
        mae=float(np.mean(np.abs(err))),
        rmse=float(math.sqrt(np.mean(err * err))),
        mape=float(np.mean(np.abs(err) / gt) * 100.0),
        pearson_r=r,
        snr_db=float(np.mean(snr)),
    )


def format_report_row(report: MetricsReport, label: str = "") -> str:
    """Table row in the usual ``MAE | RMSE | MAPE | r | SNR`` layout, two decimals."""
    cells = [f"{v:.2f}" for v in (report.mae, report.rmse, report.mape, report.pearson_r, report.snr_db)]
    return " | ".join(([label] if label else []) + cells)


@dataclass
class ClipEvaluation:
    pred_hr: float
    gt_hr: float
    snr_db: float


def evaluate_clip(pred: BvpSignal, label: BvpSignal, band=HR_BAND, snr_band=SNR_BAND) -> ClipEvaluation:
    """Bandpass both waveforms, estimate both HRs from Welch PSDs, and score the prediction's SNR."""
    if pred.fs != label.fs:
        raise ArgumentError(f"prediction fs {pred.fs} differs from label fs {label.fs}")
    pred_f = bandpass(pred, band)
    label_f = bandpass(label, band)
    pred_psd = welch_psd(pred_f)
    gt_hr = estimate_hr(welch_psd(label_f), band)
    return ClipEvaluation(estimate_hr(pred_psd, band), gt_hr, snr_db(pred_f, gt_hr, snr_band))


def bland_altman(pred_hrs, gt_hrs) -> tuple[np.ndarray, np.ndarray]:
    """Per-clip ``(mean, difference)`` pairs with difference ``pred - gt``."""
    pred = np.asarray(pred_hrs, dtype=np.float64)
    gt = np.asarray(gt_hrs, dtype=np.float64)
    return (pred + gt) / 2.0, pred - gt
