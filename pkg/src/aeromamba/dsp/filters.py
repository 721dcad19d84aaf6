"""Linear-phase FIR design and the bandwidth-degradation pipeline.

degrade() simulates the low-resolution input condition: low-pass,
integer decimation, zero-stuff upsampling back to the original rate,
all group-delay compensated so output length equals input length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from .wav import AudioBuffer


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if taps.size % 2 == 0:
            raise ArgumentError("FIR filter must have an odd tap count")
        if not np.allclose(taps, taps[::-1], atol=1e-12, rtol=0):
            raise ArgumentError("FIR taps must be symmetric (linear phase)")

    @property
    def group_delay(self) -> int:
        return (self.taps.size - 1) // 2


def design_lowpass(cutoff: float, num_taps: int) -> FirFilter:
    """Hann-windowed sinc low-pass, DC-normalized to unity gain.

    cutoff is a normalized frequency in (0, 0.5) (1.0 = sample rate).
    """
    if not 0.0 < cutoff < 0.5:
        raise ArgumentError(f"cutoff must be in (0, 0.5), got {cutoff}")
    if num_taps % 2 == 0 or num_taps < 11:
        raise ArgumentError(f"num_taps must be odd and >= 11, got {num_taps}")
    m = (num_taps - 1) // 2
    n = np.arange(num_taps) - m
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * n)
    h *= np.hanning(num_taps)
    h /= h.sum()
    return FirFilter(taps=h)


def _fft_convolve(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Full linear convolution along the last axis via rFFT."""
    n_out = x.shape[-1] + taps.size - 1
    n_fft = 1 << (n_out - 1).bit_length()
    y = np.fft.irfft(np.fft.rfft(x, n_fft) * np.fft.rfft(taps, n_fft), n_fft)
    return y[..., :n_out]


def _filtered(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Convolve and trim the group delay so output aligns with input."""
    gd = (taps.size - 1) // 2
    return _fft_convolve(x, taps)[..., gd:gd + x.shape[-1]]


def degrade(buffer: AudioBuffer, low_rate: int = 11025) -> AudioBuffer:
    """Band-limit a full-rate signal to low_rate content, staying at the
    original sample rate (low-pass, decimate, zero-stuff, interpolate)."""
    rate = buffer.sample_rate
    if low_rate <= 0 or rate % low_rate != 0:
        raise ArgumentError("decimation factor must be an integer "
                            f"(rate {rate} is not a multiple of {low_rate})")
    factor = rate // low_rate
    if factor == 1:
        return AudioBuffer(samples=buffer.samples.copy(), sample_rate=rate)

    num_taps = 64 * factor - 1
    # back the cutoff off by the Hann-sinc transition half-width so the
    # band above low_rate/2 sits in the stopband, not the transition band
    cutoff = 0.5 * low_rate / rate - 1.7 / num_taps
    lp = design_lowpass(cutoff, num_taps=num_taps)

    filtered = _filtered(buffer.samples, lp.taps)
    decimated = filtered[..., ::factor]
    stuffed = np.zeros_like(buffer.samples)
    stuffed[..., ::factor] = decimated
    restored = _filtered(stuffed, lp.taps * factor)
    return AudioBuffer(samples=restored, sample_rate=rate)
