"""Evaluation metrics: log-spectral distance and the Mann-Whitney U test."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from .stft import StftConfig, stft_array
from .wav import AudioBuffer

LSD_CONFIG = StftConfig(window_size=2048, hop_length=512)
LSD_EPS = 1e-10


def lsd(reference: AudioBuffer, estimate: AudioBuffer) -> float:
    """Log-spectral distance, averaged over frames and channels.

    Per frame: sqrt(mean over bins of (log10 P_ref - log10 P_est)^2),
    with P the windowed power spectrum floored at LSD_EPS.
    """
    if reference.sample_rate != estimate.sample_rate:
        raise ArgumentError("sample rates differ")
    if reference.samples.shape != estimate.samples.shape:
        raise ArgumentError(
            f"shape mismatch: {reference.samples.shape} vs {estimate.samples.shape}")
    vals = []
    for ch in range(reference.channels):
        p_ref = np.abs(stft_array(reference.samples[ch], LSD_CONFIG)) ** 2
        p_est = np.abs(stft_array(estimate.samples[ch], LSD_CONFIG)) ** 2
        diff = np.log10(p_ref + LSD_EPS) - np.log10(p_est + LSD_EPS)
        vals.append(np.mean(np.sqrt(np.mean(diff * diff, axis=-1))))
    return float(np.mean(vals))


@dataclass(frozen=True)
class MannWhitneyResult:
    U: float
    p_two_sided: float


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


_EXACT_LIMIT = 12


def mann_whitney_u(sample_a, sample_b) -> MannWhitneyResult:
    """Rank-sum U statistic (midrank ties) for sample_a, with a two-sided
    p-value: exact by permutation enumeration when n_a + n_b <= 12, normal
    approximation with tie and continuity corrections otherwise."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ArgumentError("both samples must be non-empty")
    na, nb = a.size, b.size
    n = na + nb
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    u_a = float(ranks[:na].sum() - na * (na + 1) / 2.0)
    mean_u = na * nb / 2.0

    if n <= _EXACT_LIMIT:
        obs_dev = abs(u_a - mean_u)
        hits = 0
        total = 0
        base = (np.arange(1, na + 1)).sum()
        for idx in itertools.combinations(range(n), na):
            u_perm = ranks[list(idx)].sum() - na * (na + 1) / 2.0
            if abs(u_perm - mean_u) >= obs_dev - 1e-12:
                hits += 1
            total += 1
        p = hits / total
    else:
        # tie-corrected variance
        _, counts = np.unique(combined, return_counts=True)
        tie_term = float(((counts ** 3) - counts).sum())
        var_u = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
        if var_u <= 0:
            p = 1.0
        else:
            dev = abs(u_a - mean_u)
            z = max(dev - 0.5, 0.0) / math.sqrt(var_u)  # continuity correction
            p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return MannWhitneyResult(U=u_a, p_two_sided=float(p))
