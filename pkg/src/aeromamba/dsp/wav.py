"""WAV (RIFF) reading and writing.

Supports PCM 16-bit, PCM 24-bit and IEEE float-32 payloads. Integer
samples are normalized to [-1, 1] on load by dividing by 2^(bits-1);
on save they are clamped to [-1, 1 - 2^(1-bits)] and rounded
half-away-from-zero so fixtures are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, AudioFormatError, UnsupportedFormatError

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioBuffer:
    """Multichannel waveform: samples[channel][n], nominal range [-1, 1]."""

    samples: np.ndarray  # shape (channels, length), float64
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ArgumentError("samples must be a (channels, length) array")
        if self.sample_rate <= 0:
            raise ArgumentError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate


def _decode_payload(raw: bytes, fmt_tag: int, bits: int, channels: int, offset: int) -> np.ndarray:
    if fmt_tag == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedFormatError(
                f"IEEE float WAV with {bits} bits not supported", codec_tag=fmt_tag)
        data = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 16:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int64)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        data = ints.astype(np.float64) / float(1 << 23)
    else:
        raise UnsupportedFormatError(
            f"unsupported codec: format tag 0x{fmt_tag:04X} with {bits} bits",
            codec_tag=fmt_tag)
    frames = data.size // channels
    if frames * channels != data.size:
        raise AudioFormatError(
            "data chunk size is not a whole number of frames", byte_offset=offset)
    return data.reshape(frames, channels).T.copy()


def load_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file into an AudioBuffer."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise AudioFormatError("file too short for a RIFF header", byte_offset=0)
    if blob[0:4] != b"RIFF":
        raise AudioFormatError("missing RIFF magic", byte_offset=0)
    if blob[8:12] != b"WAVE":
        raise AudioFormatError("missing WAVE form type", byte_offset=8)

    fmt = None
    data = None
    data_offset = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise AudioFormatError(f"truncated '{cid.decode(errors='replace')}' chunk",
                                   byte_offset=pos)
        if cid == b"fmt ":
            if size < 16:
                raise AudioFormatError("fmt chunk shorter than 16 bytes", byte_offset=pos)
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise AudioFormatError("extensible fmt chunk shorter than 40 bytes",
                                           byte_offset=pos)
                (sub_tag,) = struct.unpack_from("<H", body, 24)
                fmt = (sub_tag,) + fmt[1:]
        elif cid == b"data":
            data = body
            data_offset = pos + 8
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise AudioFormatError("no fmt chunk found", byte_offset=12)
    if data is None:
        raise AudioFormatError("no data chunk found", byte_offset=12)
    fmt_tag, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise AudioFormatError("channel count must be >= 1", byte_offset=12)
    samples = _decode_payload(data, fmt_tag, bits, channels, data_offset)
    return AudioBuffer(samples=samples, sample_rate=rate)


def _quantize(x: np.ndarray, bits: int) -> np.ndarray:
    full = float(1 << (bits - 1))
    hi = 1.0 - 2.0 ** (1 - bits)
    clamped = np.clip(x, -1.0, hi)
    scaled = clamped * full
    # round half away from zero
    return np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)


def save_wav(buffer: AudioBuffer, path, bit_depth="float32") -> None:
    """Write an AudioBuffer as RIFF/WAVE at 16, 24 or float32 depth."""
    interleaved = buffer.samples.T  # (frames, channels)
    if bit_depth == "float32" or bit_depth == 32:
        fmt_tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    elif bit_depth == 16:
        fmt_tag, bits = _WAVE_FORMAT_PCM, 16
        payload = _quantize(interleaved, 16).astype("<i2").tobytes()
    elif bit_depth == 24:
        fmt_tag, bits = _WAVE_FORMAT_PCM, 24
        ints = _quantize(interleaved, 24).astype(np.int64)
        ints = np.where(ints < 0, ints + (1 << 24), ints)
        b = np.empty(ints.shape + (3,), dtype=np.uint8)
        b[..., 0] = ints & 0xFF
        b[..., 1] = (ints >> 8) & 0xFF
        b[..., 2] = (ints >> 16) & 0xFF
        payload = b.tobytes()
    else:
        raise ArgumentError(f"bit_depth must be 16, 24 or 'float32', got {bit_depth!r}")

    channels = buffer.channels
    block_align = channels * bits // 8
    byte_rate = buffer.sample_rate * block_align
    fmt_chunk = struct.pack("<HHIIHH", fmt_tag, channels, buffer.sample_rate,
                            byte_rate, block_align, bits)
    chunks = [b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk]
    if fmt_tag == _WAVE_FORMAT_IEEE_FLOAT:
        # fact chunk is customary for non-PCM payloads
        chunks.append(b"fact" + struct.pack("<II", 4, interleaved.shape[0]))
    body = payload + (b"\x00" if len(payload) & 1 else b"")
    chunks.append(b"data" + struct.pack("<I", len(payload)) + body)
    riff_body = b"WAVE" + b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(riff_body)) + riff_body)
