"""Deterministic synthetic piano-like training material.

Each track is a sum of damped inharmonic partial stacks with noisy
hammer onsets over a quiet pink-noise bed.  Partial rolloff and decay
are tuned so every track keeps a substantial share (>= 10%) of its
energy above 5.5 kHz; pairing the tracks through dsp.degrade removes
that band, which is what the model is trained to restore.
"""

from __future__ import annotations

import numpy as np

from ..dsp import AudioBuffer, degrade
from ..errors import ArgumentError

HF_CUTOFF_HZ = 5512.5


def hf_energy_fraction(x: np.ndarray, sample_rate: int,
                       cutoff_hz: float = HF_CUTOFF_HZ) -> float:
    """Share of total spectral energy above cutoff_hz."""
    x = np.asarray(x, dtype=np.float64).ravel()
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    total = float(np.sum(spec))
    if total == 0.0:
        return 0.0
    return float(np.sum(spec[freqs > cutoff_hz]) / total)


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    white = rng.normal(size=n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    spec[1:] /= np.sqrt(freqs[1:])
    spec[0] = 0.0
    out = np.fft.irfft(spec, n)
    return out / np.max(np.abs(out))


def _add_note(x: np.ndarray, rng: np.random.Generator, sample_rate: int) -> None:
    n = x.size
    onset = rng.integers(0, max(1, int(0.85 * n)))
    dur = min(n - onset, int(rng.uniform(0.4, 1.2) * sample_rate))
    if dur < sample_rate // 50:
        return
    t = np.arange(dur) / sample_rate
    f0 = 220.0 * 2.0 ** rng.uniform(0.0, 3.0)  # 220 Hz .. 1760 Hz
    amp = 10.0 ** rng.uniform(-0.6, 0.0)
    inharm = 10.0 ** rng.uniform(-5.0, -3.8)

    k = np.arange(1, int(0.47 * sample_rate / f0) + 1, dtype=np.float64)
    freq = f0 * k * np.sqrt(1.0 + inharm * k * k)
    k = k[freq < 0.5 * sample_rate]
    freq = freq[: k.size]
    a_k = amp * k ** -0.35
    decay = 1.2 + 0.04 * k
    phase = rng.uniform(0.0, 2.0 * np.pi, size=k.size)
    partials = a_k[:, None] * np.exp(-decay[:, None] * t) * np.sin(
        2.0 * np.pi * freq[:, None] * t + phase[:, None])
    x[onset:onset + dur] += partials.sum(axis=0)

    # bright hammer transient: differenced noise is high-pass by nature
    h_len = min(dur, int(0.02 * sample_rate))
    burst = np.diff(rng.normal(size=h_len + 1))
    burst *= amp * 1.5 * np.exp(-np.arange(h_len) / (0.004 * sample_rate))
    x[onset:onset + h_len] += burst


def synth_track(rng: np.random.Generator, n_samples: int,
                sample_rate: int) -> np.ndarray:
    x = np.zeros(n_samples)
    n_notes = max(2, int(round(2.0 * n_samples / sample_rate)))
    for _ in range(n_notes):
        _add_note(x, rng, sample_rate)
    x += 0.01 * _pink_noise(rng, n_samples)
    peak = np.max(np.abs(x))
    return 0.9 * x / peak


def synth_dataset(seed: int, n_tracks: int, seconds: float,
                  sample_rate: int = 44100) -> list[AudioBuffer]:
    """Deterministic list of mono full-band tracks."""
    if n_tracks < 1 or seconds <= 0:
        raise ArgumentError(
            f"need n_tracks >= 1 and seconds > 0, got {n_tracks}, {seconds}")
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    return [AudioBuffer(samples=synth_track(rng, n, sample_rate)[None, :],
                        sample_rate=sample_rate)
            for _ in range(n_tracks)]


def paired_dataset(tracks: list[AudioBuffer],
                   low_rate: int = 11025) -> list[tuple[np.ndarray, np.ndarray]]:
    """(degraded, reference) mono sample pairs for each track."""
    pairs = []
    for buf in tracks:
        low = degrade(buf, low_rate)
        pairs.append((low.samples[0], buf.samples[0]))
    return pairs
