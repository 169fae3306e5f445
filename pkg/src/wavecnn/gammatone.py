"""Gammatone filterbank synthesis and shared FFT utilities.

The first convolutional layer of the ``in16000G`` model is initialized
with 64 band-pass gammatone kernels whose center frequencies run from
100 Hz to 8 kHz on an ERB-rate scale. A 4th-order gammatone impulse
response is used:

    g(t) = t^3 * exp(-2*pi*1.019*ERB(f)*t) * cos(2*pi*f*t)

with the Glasberg-Moore equivalent rectangular bandwidth
ERB(f) = 24.7 * (4.37*f/1000 + 1). Each kernel is normalized to unit
peak magnitude response so channel activations are comparable at
initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GammatoneBank",
    "erb_bandwidth",
    "erb_scale",
    "erb_scale_inv",
    "erb_space",
    "gammatone_kernel",
    "make_bank",
    "fft_magnitude",
    "next_pow2",
]

# Bandwidth scale factor of the 4th-order gammatone relative to the ERB.
_BANDWIDTH_FACTOR = 1.019
_ORDER = 4


def erb_bandwidth(f_hz: float) -> float:
    """Glasberg-Moore equivalent rectangular bandwidth at ``f_hz`` (Hz)."""
    if f_hz < 0:
        raise ValueError(f"frequency must be non-negative, got {f_hz}")
    return 24.7 * (4.37 * f_hz / 1000.0 + 1.0)


def erb_scale(f_hz) -> np.ndarray:
    """Map frequency in Hz to ERB-rate (number of ERBs below f)."""
    return 21.4 * np.log10(4.37 * np.asarray(f_hz, dtype=np.float64) / 1000.0 + 1.0)


def erb_scale_inv(erbs) -> np.ndarray:
    """Inverse of :func:`erb_scale`."""
    return (np.power(10.0, np.asarray(erbs, dtype=np.float64) / 21.4) - 1.0) / 4.37 * 1000.0


def erb_space(f_lo_hz: float, f_hi_hz: float, n: int) -> np.ndarray:
    """``n`` frequencies uniformly spaced on the ERB-rate scale,
    endpoints included."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.array([float(f_lo_hz)])
    return erb_scale_inv(np.linspace(erb_scale(f_lo_hz), erb_scale(f_hi_hz), n))


def gammatone_kernel(f_hz: float, kernel_len: int, sample_rate_hz: int) -> np.ndarray:
    """One gammatone impulse response, truncated to ``kernel_len`` taps and
    normalized to unit peak magnitude response."""
    t = np.arange(kernel_len, dtype=np.float64) / sample_rate_hz
    g = (
        t ** (_ORDER - 1)
        * np.exp(-2.0 * np.pi * _BANDWIDTH_FACTOR * erb_bandwidth(f_hz) * t)
        * np.cos(2.0 * np.pi * f_hz * t)
    )
    peak = np.abs(np.fft.rfft(g, next_pow2(kernel_len))).max()
    return g / peak


@dataclass(frozen=True)
class GammatoneBank:
    """A stack of gammatone kernels with ascending center frequencies."""

    kernels: np.ndarray  # (n_filters, kernel_len)
    center_freqs_hz: np.ndarray  # (n_filters,) strictly increasing
    sample_rate_hz: int

    def __post_init__(self):
        if self.kernels.ndim != 2 or self.kernels.shape[0] != self.center_freqs_hz.shape[0]:
            raise ValueError("kernels and center_freqs_hz disagree on filter count")
        if not np.all(np.isfinite(self.kernels)):
            raise ValueError("bank kernels contain non-finite values")
        if not np.all(np.diff(self.center_freqs_hz) > 0) and self.center_freqs_hz.size > 1:
            raise ValueError("center frequencies must be strictly increasing")

    @property
    def n_filters(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_len(self) -> int:
        return self.kernels.shape[1]


def make_bank(
    n_filters: int = 64,
    f_lo_hz: float = 100.0,
    f_hi_hz: float = 8000.0,
    kernel_len: int = 512,
    sample_rate_hz: int = 16000,
) -> GammatoneBank:
    """Synthesize an ERB-spaced gammatone filterbank.

    ``f_hi_hz`` may sit at the Nyquist frequency (the stock 64-filter
    bank tops out at exactly 8 kHz for 16 kHz audio).
    """
    if n_filters < 1:
        raise ValueError("n_filters must be >= 1")
    if not 0.0 < f_lo_hz < f_hi_hz:
        raise ValueError(f"need 0 < f_lo < f_hi, got ({f_lo_hz}, {f_hi_hz})")
    if f_hi_hz > sample_rate_hz / 2:
        raise ValueError(f"f_hi {f_hi_hz} Hz exceeds Nyquist {sample_rate_hz / 2} Hz")
    if kernel_len < 8:
        raise ValueError("kernel_len must be >= 8")

    freqs = erb_space(f_lo_hz, f_hi_hz, n_filters)
    kernels = np.stack([gammatone_kernel(f, kernel_len, sample_rate_hz) for f in freqs])
    return GammatoneBank(kernels, freqs, sample_rate_hz)


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1 << (n - 1).bit_length()


def fft_magnitude(x: np.ndarray) -> np.ndarray:
    """Magnitude spectrum of ``x`` zero-padded to the next power of two.

    Returns the non-negative-frequency bins, length ``padded/2 + 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("x must be a non-empty 1D array")
    return np.abs(np.fft.rfft(x, next_pow2(x.size)))


def fft_bin_freqs(n_samples: int, sample_rate_hz: float) -> np.ndarray:
    """Frequency axis (Hz) matching :func:`fft_magnitude` of an
    ``n_samples``-long input."""
    padded = next_pow2(n_samples)
    return np.arange(padded // 2 + 1) * (sample_rate_hz / padded)
