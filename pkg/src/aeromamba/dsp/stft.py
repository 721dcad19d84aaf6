"""STFT analysis and weighted overlap-add synthesis.

The analysis grid uses reflect padding of W/2 on both ends; the frame
count is ceil((len + W) / H). The inverse applies the same window again
and divides by the summed squared-window envelope, which makes
istft(stft(x)) exact wherever the envelope is nonzero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError
from .wav import AudioBuffer


def periodic_hann(size: int) -> np.ndarray:
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 512
    hop_length: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.window_size <= 0 or self.hop_length <= 0:
            raise ArgumentError("window_size and hop_length must be positive")
        if self.window_size % self.hop_length != 0:
            raise ArgumentError(
                f"hop_length {self.hop_length} must divide window_size {self.window_size}")
        if self.window_size % 2 != 0:
            raise ArgumentError("window_size must be even")
        if self.window != "hann":
            raise ArgumentError(f"unsupported analysis window {self.window!r}")

    @property
    def bins(self) -> int:
        return self.window_size // 2 + 1

    def window_values(self) -> np.ndarray:
        return periodic_hann(self.window_size)

    def num_frames(self, length: int) -> int:
        return math.ceil((length + self.window_size) / self.hop_length)


@dataclass
class ComplexSpectrogram:
    values: np.ndarray  # (frames, bins) complex
    config: StftConfig
    original_length: int | None
    sample_rate: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.config.bins:
            raise ArgumentError(
                f"spectrogram must be (frames, {self.config.bins}), got {self.values.shape}")

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]


def pad_for_stft(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """Reflect-pad W/2 on the left; pad the right (reflect, then zeros if
    the signal is too short to reflect from) up to the full frame grid."""
    n = x.shape[-1]
    w, h = config.window_size, config.hop_length
    if n == 0:
        raise ArgumentError("cannot transform an empty signal")
    if n < w // 2 + 1:
        raise ArgumentError(f"signal too short for reflect padding: {n} < {w // 2 + 1}")
    frames = config.num_frames(n)
    total = (frames - 1) * h + w
    back = total - n - w // 2
    pads = [(0, 0)] * (x.ndim - 1)
    reflect_back = min(back, n - 1)
    y = np.pad(x, pads + [(w // 2, reflect_back)], mode="reflect")
    if reflect_back < back:
        y = np.pad(y, pads + [(0, back - reflect_back)], mode="constant")
    return y


def frame_signal(padded: np.ndarray, config: StftConfig, frames: int) -> np.ndarray:
    w, h = config.window_size, config.hop_length
    shape = padded.shape[:-1] + (frames, w)
    strides = padded.strides[:-1] + (h * padded.strides[-1], padded.strides[-1])
    return np.lib.stride_tricks.as_strided(padded, shape=shape, strides=strides)


def stft_array(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """STFT of a 1-D (or batched) signal; returns (..., frames, bins) complex."""
    frames = config.num_frames(x.shape[-1])
    padded = pad_for_stft(np.asarray(x, dtype=np.float64), config)
    windowed = frame_signal(padded, config, frames) * config.window_values()
    return np.fft.rfft(windowed, axis=-1)


def istft_array(values: np.ndarray, config: StftConfig, original_length: int) -> np.ndarray:
    """Weighted overlap-add inverse of stft_array; returns (..., length)."""
    w, h = config.window_size, config.hop_length
    frames = values.shape[-2]
    window = config.window_values()
    total = (frames - 1) * h + w
    ft = np.fft.irfft(values, n=w, axis=-1) * window

    acc = np.zeros(values.shape[:-2] + (total,), dtype=np.float64)
    env = np.zeros(total, dtype=np.float64)
    wsq = window * window
    for t in range(frames):
        acc[..., t * h:t * h + w] += ft[..., t, :]
        env[t * h:t * h + w] += wsq
    out = acc[..., w // 2:w // 2 + original_length]
    env = env[w // 2:w // 2 + original_length]
    return out / np.maximum(env, 1e-12)


def stft(buffer: AudioBuffer, config: StftConfig) -> ComplexSpectrogram:
    """STFT of a single-channel AudioBuffer."""
    if buffer.channels != 1:
        raise ArgumentError(f"stft expects a single channel, got {buffer.channels}")
    if buffer.length == 0:
        raise ArgumentError("cannot transform an empty signal")
    values = stft_array(buffer.samples[0], config)
    return ComplexSpectrogram(values=values, config=config,
                              original_length=buffer.length,
                              sample_rate=buffer.sample_rate)


def istft(spec: ComplexSpectrogram) -> AudioBuffer:
    """Inverse STFT back to a single-channel AudioBuffer."""
    if spec.original_length is None:
        raise ArgumentError("spectrogram is missing original_length")
    x = istft_array(spec.values, spec.config, spec.original_length)
    return AudioBuffer(samples=x[None, :], sample_rate=spec.sample_rate)
