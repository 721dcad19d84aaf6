"""Offline and streaming enhancement, plus the benchmark harness.

The streaming session consumes fixed-size sample chunks, converts them to
STFT frames, runs the generator block-processor with carried state, and
reassembles output samples by weighted overlap-add.  All buffers are
preallocated at construction, so the persistent footprint is a closed-form
function of the configuration and never of the stream duration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dsp import AudioBuffer, istft_array, stft_array
from .errors import ArgumentError, ContractError
from .model import (GeneratorConfig, GeneratorInference, config_from_text,
                    load_checkpoint)
from .model.checkpoint import decode_tensors, encode_tensors


def load_model(path) -> GeneratorInference:
    """Build an inference model from a checkpoint file."""
    tensors, text = load_checkpoint(path)
    cfg = config_from_text(text)
    return GeneratorInference(cfg, tensors)


def _spec_to_image(spec: np.ndarray, bins: int) -> np.ndarray:
    """(F, bins) complex -> (2*bins, F) stacked real/imag image."""
    stacked = np.stack([spec.real, spec.imag])  # (2, F, bins)
    return np.moveaxis(stacked, 1, 2).reshape(2 * bins, spec.shape[0])


def _image_to_spec(img: np.ndarray, bins: int) -> np.ndarray:
    """(2*bins, F) image -> (F, bins) complex."""
    halves = img.reshape(2, bins, img.shape[1])
    return (halves[0] + 1j * halves[1]).T


def enhance_array(model: GeneratorInference, x: np.ndarray) -> np.ndarray:
    """Whole-signal enhancement of one channel."""
    cfg = model.cfg
    spec = stft_array(x, cfg.stft)
    frames = spec.shape[0]
    img = _spec_to_image(spec, cfg.stft.bins)
    block = cfg.block_frames
    padded = -(-frames // block) * block
    if padded != frames:
        img = np.pad(img, ((0, 0), (0, padded - frames)))
    delta, _ = model.process_frames(img, model.init_states())
    out_spec = spec + _image_to_spec(delta[:, :frames], cfg.stft.bins)
    return istft_array(out_spec, cfg.stft, x.shape[-1])


def enhance_offline(model: GeneratorInference, buffer: AudioBuffer) -> AudioBuffer:
    out = np.stack([enhance_array(model, ch) for ch in buffer.samples])
    return AudioBuffer(samples=out, sample_rate=buffer.sample_rate)


class StreamSession:
    """Single-channel incremental enhancement with constant memory.

    Feed equal-size chunks with `process`; a shorter chunk closes the
    stream, or call `flush` explicitly.  The concatenated output equals
    enhance_array on the whole signal.
    """

    def __init__(self, model: GeneratorInference, chunk_frames: int | None = None):
        cfg = model.cfg
        block = cfg.block_frames
        if chunk_frames is None:
            chunk_frames = block
        if chunk_frames < block or chunk_frames % block != 0:
            raise ArgumentError(
                f"chunk_frames must be a positive multiple of {block}, "
                f"got {chunk_frames}")
        self.model = model
        self.cfg = cfg
        self.chunk_frames = chunk_frames
        w, h = cfg.window_size, cfg.hop_size
        self.chunk_samples = chunk_frames * h
        self.window = cfg.stft.window_values()
        self._wsq = self.window * self.window
        self.states = model.init_states()

        cap = self.chunk_samples + 2 * w
        self._pad = np.zeros(cap)          # padded-signal slice awaiting framing
        self._pad_len = 0
        self._pad_pos = 0                  # padded index of _pad[0]
        self._acc = np.zeros(cap)          # OLA numerator, from _ola_pos
        self._env = np.zeros(cap)          # OLA window-power envelope
        self._ola_pos = 0
        self._pend_img = np.zeros((cfg.spec_channels, chunk_frames))
        self._pend_spec = np.zeros((chunk_frames, cfg.stft.bins), dtype=complex)
        self._pend_len = 0
        self._stage = np.zeros(w // 2 + 1)  # start-of-stream reflect staging
        self._stage_len = 0
        self._raw_tail = np.zeros(2 * w)   # recent input samples, newest last
        self._n_raw = 0
        self._frames_out = 0               # frames framed (== frames to OLA)
        self._emit_pos = w // 2            # padded index of next sample to emit
        self._chunks_in = 0
        self._finished = False

    # -- bookkeeping ------------------------------------------------------

    def persistent_bytes(self) -> int:
        total = sum(a.nbytes for a in (self._pad, self._acc, self._env,
                                       self._pend_img, self._pend_spec,
                                       self._stage, self._raw_tail, self.window,
                                       self._wsq))
        return total + self.model.state_bytes(self.states)

    @staticmethod
    def expected_persistent_bytes(cfg: GeneratorConfig, chunk_frames: int) -> int:
        """Closed-form persistent footprint; independent of stream length."""
        w, h = cfg.window_size, cfg.hop_size
        cap = chunk_frames * h + 2 * w
        buffers = 8 * (3 * cap + (w // 2 + 1) + 4 * w)
        pending = 8 * cfg.spec_channels * chunk_frames + 16 * chunk_frames * cfg.stft.bins
        state = 0
        for i in range(cfg.depth):
            layer = cfg.mamba_layer(i)
            state += 8 * (layer.d_inner * layer.d_state
                          + (layer.conv_kernel - 1) * layer.d_inner)
        return buffers + pending + state

    def _append_pad(self, samples: np.ndarray) -> None:
        n = samples.size
        if self._pad_len + n > self._pad.size:
            # discard fully framed history first
            keep_from = self._frames_out * self.cfg.hop_size - self._pad_pos
            if keep_from > 0:
                self._pad[:self._pad_len - keep_from] = self._pad[keep_from:self._pad_len]
                self._pad_len -= keep_from
                self._pad_pos += keep_from
        if self._pad_len + n > self._pad.size:
            raise ContractError("stream buffer overflow")  # cannot happen by sizing
        self._pad[self._pad_len:self._pad_len + n] = samples
        self._pad_len += n

    def _ingest(self, chunk: np.ndarray) -> None:
        n = chunk.size
        w = self.cfg.window_size
        tail = self._raw_tail.size
        # track recent raw samples for the final reflect padding
        if n >= tail:
            self._raw_tail[:] = chunk[-tail:]
        else:
            self._raw_tail[:tail - n] = self._raw_tail[n:]
            self._raw_tail[tail - n:] = chunk
        self._n_raw += n
        if self._stage_len < self._stage.size:
            take = min(n, self._stage.size - self._stage_len)
            self._stage[self._stage_len:self._stage_len + take] = chunk[:take]
            self._stage_len += take
            if self._stage_len == self._stage.size:
                front = self._stage[1:w // 2 + 1][::-1]
                self._append_pad(np.concatenate([front, self._stage]))
                self._append_pad(chunk[take:])
            return
        self._append_pad(chunk)

    def _frame_available(self) -> bool:
        w, h = self.cfg.window_size, self.cfg.hop_size
        start = self._frames_out * h
        return start + w <= self._pad_pos + self._pad_len

    def _extract_frames(self) -> None:
        """Move every computable frame into the pending block, running the
        model whenever a full chunk of frames has accumulated."""
        w, h = self.cfg.window_size, self.cfg.hop_size
        bins = self.cfg.stft.bins
        while self._frame_available():
            start = self._frames_out * h - self._pad_pos
            frame = self._pad[start:start + w] * self.window
            spec = np.fft.rfft(frame)
            col = self._pend_len
            self._pend_spec[col] = spec
            self._pend_img[:bins, col] = spec.real
            self._pend_img[bins:, col] = spec.imag
            self._pend_len += 1
            self._frames_out += 1
            if self._pend_len == self.chunk_frames:
                self._run_pending(self.chunk_frames)

    def _run_pending(self, n_frames: int, real_frames: int | None = None) -> None:
        """Run the generator on the first n_frames pending columns and
        overlap-add the (first real_frames) output frames."""
        if n_frames == 0:
            return
        w, h = self.cfg.window_size, self.cfg.hop_size
        bins = self.cfg.stft.bins
        if real_frames is None:
            real_frames = n_frames
        delta, self.states = self.model.process_frames(
            self._pend_img[:, :n_frames], self.states)
        out_spec = self._pend_spec[:real_frames] + _image_to_spec(
            delta[:, :real_frames], bins)
        ft = np.fft.irfft(out_spec, n=w, axis=-1) * self.window
        first = self._frames_out - real_frames  # padded frame index of col 0
        # make room: drop emitted OLA history, but keep the span the new
        # frames are about to write into
        drop = min(self._emit_pos, first * h) - self._ola_pos
        if drop > 0:
            keep = self._acc.size - drop
            self._acc[:keep] = self._acc[drop:]
            self._acc[keep:] = 0.0
            self._env[:keep] = self._env[drop:]
            self._env[keep:] = 0.0
            self._ola_pos += drop
        for t in range(real_frames):
            lo = (first + t) * h - self._ola_pos
            self._acc[lo:lo + w] += ft[t]
            self._env[lo:lo + w] += self._wsq
        self._pend_len = 0

    def _emit(self, upto_pad: int, limit_pad: int) -> np.ndarray:
        hi = min(upto_pad, limit_pad)
        lo = self._emit_pos
        if hi <= lo:
            return np.empty(0)
        a = self._acc[lo - self._ola_pos:hi - self._ola_pos]
        e = self._env[lo - self._ola_pos:hi - self._ola_pos]
        self._emit_pos = hi
        return a / np.maximum(e, 1e-12)

    # -- public API -------------------------------------------------------

    def process(self, chunk: np.ndarray, index: int | None = None) -> np.ndarray:
        """Feed one chunk; returns whatever output samples are now final.
        A chunk shorter than chunk_samples closes the stream."""
        chunk = np.asarray(chunk, dtype=np.float64).ravel()
        if self._finished:
            raise ContractError("stream already closed")
        if index is not None and index != self._chunks_in:
            raise ContractError(
                f"out-of-order chunk: expected {self._chunks_in}, got {index}")
        if chunk.size > self.chunk_samples or chunk.size == 0:
            raise ArgumentError(
                f"chunk must have 1..{self.chunk_samples} samples, "
                f"got {chunk.size}")
        self._chunks_in += 1
        self._ingest(chunk)
        if chunk.size < self.chunk_samples:
            return self.flush()
        self._extract_frames()
        w, h = self.cfg.window_size, self.cfg.hop_size
        # samples below the processed-frame frontier have all contributions in
        done_pad = (self._frames_out - self._pend_len) * h
        return self._emit(done_pad, w // 2 + self._n_raw)

    def flush(self) -> np.ndarray:
        """Close the stream: pad, process remaining frames, emit the tail."""
        if self._finished:
            raise ContractError("stream already closed")
        self._finished = True
        w, h = self.cfg.window_size, self.cfg.hop_size
        n = self._n_raw
        if n < w // 2 + 1:
            raise ArgumentError(
                f"signal too short for reflect padding: {n} < {w // 2 + 1}")
        total_frames = self.cfg.stft.num_frames(n)
        total = (total_frames - 1) * h + w
        back = total - n - w // 2
        reflect_back = min(back, n - 1)
        tail_n = min(n, self._raw_tail.size)
        if reflect_back + 1 > tail_n:
            raise ContractError("reflect padding exceeds retained history")
        tail = self._raw_tail[self._raw_tail.size - tail_n:]
        back_pad = np.concatenate([
            tail[-2:-2 - reflect_back:-1] if reflect_back else np.empty(0),
            np.zeros(back - reflect_back)])
        self._append_pad(back_pad)
        self._extract_frames()
        if self._pend_len:
            block = self.cfg.block_frames
            real = self._pend_len
            run = -(-real // block) * block
            self._pend_img[:, real:run] = 0.0  # zero-image pad frames
            self._run_pending(run, real_frames=real)
        return self._emit(w // 2 + n, w // 2 + n)

    def snapshot(self) -> bytes:
        """Serialize the resumable session state (tensor-table encoding)."""
        tensors = {"pad": self._pad[:self._pad_len].copy(),
                   "acc": self._acc.copy(), "env": self._env.copy(),
                   "pend_img": self._pend_img[:, :self._pend_len].copy(),
                   "pend_re": self._pend_spec[:self._pend_len].real.copy(),
                   "pend_im": self._pend_spec[:self._pend_len].imag.copy(),
                   "stage": self._stage[:self._stage_len].copy(),
                   "raw_tail": self._raw_tail.copy(),
                   }
        counters = np.array([self._pad_pos, self._ola_pos, self._n_raw,
                             self._frames_out, self._emit_pos,
                             self._chunks_in, int(self._finished)],
                            dtype=np.float64)
        # split counters so large positions survive the float32 encoding
        hi = counters.astype(np.float32).astype(np.float64)
        tensors["counters_hi"] = hi
        tensors["counters_lo"] = counters - hi
        for i, st in enumerate(self.states):
            tensors[f"ssm{i}.h"] = st.ssm_state.h.copy()
            tensors[f"ssm{i}.pos"] = np.array([st.ssm_state.position],
                                              dtype=np.float64)
            tensors[f"ssm{i}.conv"] = st.conv_tail.copy()
        return encode_tensors(tensors)

    def restore(self, blob: bytes) -> None:
        """Counterpart of snapshot; restores to float32-rounded state."""
        from . import ssm
        from .model.mamba import MambaLayerState
        tensors, _ = decode_tensors(blob)
        c = np.rint(tensors["counters_hi"] + tensors["counters_lo"]).astype(np.int64)
        (self._pad_pos, self._ola_pos, self._n_raw, self._frames_out,
         self._emit_pos, self._chunks_in) = (int(v) for v in c[:6])
        self._finished = bool(c[6])
        self._pad_len = tensors["pad"].size
        self._pad[:self._pad_len] = tensors["pad"]
        self._acc[:] = tensors["acc"]
        self._env[:] = tensors["env"]
        self._pend_len = tensors["pend_img"].shape[1]
        self._pend_img[:, :self._pend_len] = tensors["pend_img"]
        self._pend_spec[:self._pend_len] = (tensors["pend_re"]
                                            + 1j * tensors["pend_im"])
        self._stage_len = tensors["stage"].size
        self._stage[:self._stage_len] = tensors["stage"]
        self._raw_tail[:] = tensors["raw_tail"]
        self.states = [
            MambaLayerState(
                ssm_state=ssm.SsmState(h=tensors[f"ssm{i}.h"],
                                       position=int(tensors[f"ssm{i}.pos"][0])),
                conv_tail=tensors[f"ssm{i}.conv"])
            for i in range(len(self.states))]


def enhance_streaming(session: StreamSession, chunk: AudioBuffer,
                      index: int | None = None) -> AudioBuffer:
    """Feed one mono chunk through a session; returns the finalized output
    samples (possibly empty while the session builds look-ahead)."""
    if chunk.channels != 1:
        raise ArgumentError("streaming enhancement is single-channel")
    out = session.process(chunk.samples[0], index=index)
    return AudioBuffer(samples=out[None, :], sample_rate=chunk.sample_rate)


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

def attention_activation_bytes(seq_len: int, width: int) -> int:
    """Activation footprint of one quadratic self-attention layer: the
    (L, L) score matrix plus Q, K, V and the output (each (L, width))."""
    return 8 * (seq_len * seq_len + 4 * seq_len * width)


def attention_reference_forward(x: np.ndarray, seed: int = 0) -> np.ndarray:
    """Single-head softmax attention over x (L, width); the memory-growth
    contrast for the benchmark."""
    length, width = x.shape
    rng = np.random.default_rng(seed)
    wq, wk, wv = (rng.normal(0.0, 1.0 / math.sqrt(width), size=(width, width))
                  for _ in range(3))
    q, k, v = x @ wq, x @ wk, x @ wv
    scores = q @ k.T / math.sqrt(width)
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


@dataclass
class BenchRow:
    mode: str
    segment_s: float
    median_s: float
    state_bytes: int
    rt_factor: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["mode,segment_s,median_s,state_bytes,rt_factor"]
        for r in self.rows:
            lines.append(f"{r.mode},{r.segment_s:g},{r.median_s:.6f},"
                         f"{r.state_bytes},{r.rt_factor:.4f}")
        return "\n".join(lines) + "\n"


def bench(model: GeneratorInference, segments=(1, 2, 5, 10, 20),
          repeats: int = 3, sample_rate: int = 44100,
          chunk_frames: int | None = None, seed: int = 0) -> BenchReport:
    """Median offline/streaming wall times plus the attention-memory
    contrast across segment lengths."""
    cfg = model.cfg
    report = BenchReport()
    rng = np.random.default_rng(seed)
    width = cfg.channels[1]
    for seg in segments:
        n = int(round(seg * sample_rate))
        x = rng.normal(0.0, 0.1, size=n)
        frames = cfg.stft.num_frames(n)

        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            enhance_array(model, x)
            times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        report.rows.append(BenchRow(
            "offline", seg, med,
            8 * cfg.spec_channels * frames,  # whole-signal image working set
            seg / med))

        times = []
        session = None
        for _ in range(repeats):
            session = StreamSession(model, chunk_frames)
            t0 = time.perf_counter()
            pos = 0
            while pos < n:
                session.process(x[pos:pos + session.chunk_samples])
                pos += session.chunk_samples
            if not session._finished:
                session.flush()
            times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        report.rows.append(BenchRow(
            "streaming", seg, med, session.persistent_bytes(), seg / med))

        xa = rng.normal(size=(frames, width))
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            attention_reference_forward(xa)
            times.append(time.perf_counter() - t0)
        med = float(np.median(times))
        report.rows.append(BenchRow(
            "attention", seg, med,
            attention_activation_bytes(frames, width), seg / med))
    return report
