"""Waveform I/O, resampling/degradation, STFT/iSTFT and evaluation metrics."""

from .filters import FirFilter, degrade, design_lowpass
from .metrics import LSD_CONFIG, LSD_EPS, MannWhitneyResult, lsd, mann_whitney_u
from .stft import (ComplexSpectrogram, StftConfig, istft, istft_array,
                   periodic_hann, stft, stft_array)
from .wav import AudioBuffer, load_wav, save_wav

__all__ = [
    "AudioBuffer", "load_wav", "save_wav",
    "FirFilter", "design_lowpass", "degrade",
    "StftConfig", "ComplexSpectrogram", "stft", "istft",
    "stft_array", "istft_array", "periodic_hann",
    "lsd", "mann_whitney_u", "MannWhitneyResult", "LSD_CONFIG", "LSD_EPS",
]
