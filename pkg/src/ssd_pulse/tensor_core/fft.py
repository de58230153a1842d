"""Real FFT for arbitrary lengths.

Power-of-two lengths go through an iterative radix-2 transform. Any other
length is turned into a circular convolution with a chirp (Bluestein's
algorithm) and evaluated with power-of-two transforms. All transforms act on
the last axis, so leading axes are independent signals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ssd_pulse.errors import ArgumentError, ShapeError


@dataclass(frozen=True)
class ComplexSpectrum:
    """One-sided spectrum split into real and imaginary float32 parts."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"spectrum parts disagree: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def to_complex(self) -> np.ndarray:
        return self.re.astype(np.float64) + 1j * self.im.astype(np.float64)

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ComplexSpectrum":
        return cls(np.ascontiguousarray(z.real, dtype=np.float32), np.ascontiguousarray(z.imag, dtype=np.float32))


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Forward DFT along the last axis; length must be a power of two."""
    n = x.shape[-1]
    y = np.asarray(x, dtype=np.complex128)[..., _bit_reverse(n)]
    lead = y.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * twiddle
        y = np.concatenate((even + odd, even - odd), axis=-1)
        size *= 2
    return y.reshape(*lead, n)


def _dft(x: np.ndarray) -> np.ndarray:
    """Complex forward DFT along the last axis for any length."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if _is_pow2(n):
        return _fft_pow2(x)
    m = _next_pow2(2 * n - 1)
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:][::-1])
    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return conv[..., :n] * chirp


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[-1]


def _idft(x: np.ndarray) -> np.ndarray:
    return np.conj(_dft(np.conj(x))) / x.shape[-1]


def rfft(x) -> ComplexSpectrum:
    """One-sided DFT of real input along the last axis (``n // 2 + 1`` bins)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ArgumentError("rfft: input must be non-empty")
    n = x.shape[-1]
    return ComplexSpectrum.from_complex(_dft(x)[..., : n // 2 + 1])


def rfft64(x) -> np.ndarray:
    """Like :func:`rfft` but returns the complex128 spectrum without rounding."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ArgumentError("rfft: input must be non-empty")
    return _dft(x)[..., : x.shape[-1] // 2 + 1]


def irfft64(spec: np.ndarray, n: int) -> np.ndarray:
    """Real inverse of a one-sided complex spectrum, float64 in and out.

    The imaginary parts of the DC bin and (for even ``n``) the Nyquist bin are
    discarded, which is the conjugate-symmetric completion of the spectrum.
    """
    spec = np.asarray(spec, dtype=np.complex128)
    if n < 1:
        raise ArgumentError(f"irfft: n must be >= 1, got {n}")
    if spec.shape[-1] != n // 2 + 1:
        raise ShapeError(f"irfft: spectrum length {spec.shape[-1]} does not match n={n} (need {n // 2 + 1})")
    full = np.zeros(spec.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : n // 2 + 1] = spec
    full[..., 0] = spec[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = spec[..., n // 2].real
    tail = np.arange(1, (n + 1) // 2)
    full[..., n - tail] = np.conj(spec[..., tail])
    return _idft(full).real


def irfft(s: ComplexSpectrum, n: int) -> np.ndarray:
    """Inverse of :func:`rfft`; returns float32 of length ``n``."""
    return irfft64(s.to_complex(), n).astype(np.float32)
