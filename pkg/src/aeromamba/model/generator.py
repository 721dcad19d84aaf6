"""Spectral U-Net generator with selective-SSM bottlenecks.

The waveform is lifted to a (2*bins, frames) real spectrogram image,
refined by an encoder/decoder over the frame axis (strided convs with
kernel == stride, GLU gates, one Mamba layer per encoder level, additive
skips), and the refined spectrogram is added to the input spectrogram
before resynthesis.  kernel == stride makes every conv block-local over
groups of stride**depth frames, so streaming inference only has to carry
the per-layer SSM states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..dsp import StftConfig
from ..errors import ArgumentError, ContractError
from . import mamba


@dataclass(frozen=True)
class GeneratorConfig:
    window_size: int = 512
    hop_size: int = 256
    depth: int = 4
    base_channels: int = 32
    channel_cap: int = 256
    stride: int = 4
    d_state: int = 16
    conv_kernel: int = 4
    expand: int = 2
    bidirectional: bool = False

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.window_size, self.hop_size)

    @property
    def spec_channels(self) -> int:
        return 2 * self.stft.bins

    @property
    def channels(self) -> list[int]:
        """Channel widths per level; index 0 is the stem width."""
        out = [self.base_channels]
        for i in range(self.depth):
            out.append(min(self.channel_cap, self.base_channels * 2 ** (i + 1)))
        return out

    @property
    def block_frames(self) -> int:
        """Frame granularity of the encoder/decoder stack."""
        return self.stride ** self.depth

    def mamba_layer(self, level: int) -> mamba.MambaLayerConfig:
        return mamba.MambaLayerConfig(
            d_model=self.channels[level + 1], expand=self.expand,
            conv_kernel=self.conv_kernel, d_state=self.d_state,
            bidirectional=self.bidirectional)


_CONFIG_FIELDS = ["window_size", "hop_size", "depth", "base_channels",
                  "channel_cap", "stride", "d_state", "conv_kernel",
                  "expand", "bidirectional"]


def config_to_text(cfg: GeneratorConfig) -> str:
    lines = [f"{f}={int(getattr(cfg, f))}" for f in _CONFIG_FIELDS]
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> GeneratorConfig:
    values = {}
    for line in text.strip().splitlines():
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ContractError(f"unknown generator config field {key!r}")
        values[key] = int(raw)
    missing = [f for f in _CONFIG_FIELDS if f not in values]
    if missing:
        raise ContractError(f"generator config missing fields {missing}")
    values["bidirectional"] = bool(values["bidirectional"])
    return GeneratorConfig(**values)


def param_specs(cfg: GeneratorConfig) -> list[tuple[str, tuple]]:
    cs = cfg.channels
    specs = [("gen.in_conv.w", (cs[0], cfg.spec_channels, 1)),
             ("gen.in_conv.b", (cs[0],))]
    for i in range(cfg.depth):
        specs += [(f"gen.enc{i}.conv.w", (2 * cs[i + 1], cs[i], cfg.stride)),
                  (f"gen.enc{i}.conv.b", (2 * cs[i + 1],))]
        specs += mamba.param_specs(cfg.mamba_layer(i), f"gen.enc{i}.mamba")
    for i in range(cfg.depth):
        specs += [(f"gen.dec{i}.conv.w", (cs[i + 1], 2 * cs[i], cfg.stride)),
                  (f"gen.dec{i}.conv.b", (2 * cs[i],))]
    specs += [("gen.out_conv.w", (cfg.spec_channels, cs[0], 1)),
              ("gen.out_conv.b", (cfg.spec_channels,))]
    return specs


def init_params(cfg: GeneratorConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    cs = cfg.channels
    params: dict[str, np.ndarray] = {}

    def conv(shape, scale=None):
        fan_in = shape[1] * shape[2]
        return rng.normal(0.0, scale or 1.0 / math.sqrt(fan_in), size=shape)

    params["gen.in_conv.w"] = conv((cs[0], cfg.spec_channels, 1))
    params["gen.in_conv.b"] = np.zeros(cs[0])
    for i in range(cfg.depth):
        params[f"gen.enc{i}.conv.w"] = conv((2 * cs[i + 1], cs[i], cfg.stride))
        params[f"gen.enc{i}.conv.b"] = np.zeros(2 * cs[i + 1])
        params.update(mamba.init_params(cfg.mamba_layer(i), f"gen.enc{i}.mamba", rng))
    for i in range(cfg.depth):
        params[f"gen.dec{i}.conv.w"] = conv((cs[i + 1], 2 * cs[i], cfg.stride))
        params[f"gen.dec{i}.conv.b"] = np.zeros(2 * cs[i])
    # near-zero head: at step zero the model is close to the identity
    params["gen.out_conv.w"] = conv((cfg.spec_channels, cs[0], 1), scale=0.01)
    params["gen.out_conv.b"] = np.zeros(cfg.spec_channels)
    return params


def param_count(cfg: GeneratorConfig) -> tuple[int, list[tuple[str, tuple, int]]]:
    """Total parameter count plus an itemized (name, shape, count) table."""
    rows = [(name, shape, int(np.prod(shape))) for name, shape in param_specs(cfg)]
    return sum(r[2] for r in rows), rows


def check_params(cfg: GeneratorConfig, params: dict) -> None:
    """Verify that `params` exactly matches the config's parameter table."""
    specs = dict(param_specs(cfg))
    extra = sorted(set(params) - set(specs))
    missing = sorted(set(specs) - set(params))
    if extra or missing:
        raise ContractError(
            f"parameter table mismatch: missing {missing}, unexpected {extra}")
    for name, shape in specs.items():
        v = params[name]
        data = v.data if isinstance(v, ad.Tensor) else v
        if tuple(data.shape) != tuple(shape):
            raise ContractError(
                f"parameter {name} has shape {tuple(data.shape)}, expected {shape}")


def _spec_to_image(spec: ad.Tensor, batch: int, frames: int, bins: int) -> ad.Tensor:
    x = ad.moveaxis(spec, 2, 3)  # (B, 2, bins, F)
    return ad.reshape(x, (batch, 2 * bins, frames))


def _image_to_spec(x: ad.Tensor, batch: int, frames: int, bins: int) -> ad.Tensor:
    s = ad.reshape(x, (batch, 2, bins, frames))
    return ad.moveaxis(s, 2, 3)


def forward_train(cfg: GeneratorConfig, params: dict[str, ad.Tensor],
                  wav: ad.Tensor) -> ad.Tensor:
    """Training-graph forward: waveform (B, n) -> enhanced waveform (B, n)."""
    if wav.data.ndim != 2:
        raise ArgumentError(f"expected (B, n) waveform, got {wav.data.shape}")
    batch, n = wav.data.shape
    bins = cfg.stft.bins
    spec = ad.stft_op(wav, cfg.stft)  # (B, 2, F, bins)
    frames = spec.data.shape[2]
    block = cfg.block_frames
    padded = -(-frames // block) * block

    x = _spec_to_image(spec, batch, frames, bins)
    if padded != frames:
        x = ad.pad_last(x, 0, padded - frames)
    x = ad.conv1d(x, params["gen.in_conv.w"], params["gen.in_conv.b"])
    skips = []
    for i in range(cfg.depth):
        skips.append(x)
        x = ad.conv1d(x, params[f"gen.enc{i}.conv.w"], params[f"gen.enc{i}.conv.b"],
                      stride=cfg.stride)
        x = ad.glu(x, axis=1)
        x = ad.moveaxis(x, 1, 2)
        x = mamba.forward_train(cfg.mamba_layer(i), params, f"gen.enc{i}.mamba", x)
        x = ad.moveaxis(x, 1, 2)
    for i in reversed(range(cfg.depth)):
        x = ad.conv_transpose1d(x, params[f"gen.dec{i}.conv.w"],
                                params[f"gen.dec{i}.conv.b"], stride=cfg.stride)
        x = ad.glu(x, axis=1)
        x = ad.add(x, skips[i])
    x = ad.conv1d(x, params["gen.out_conv.w"], params["gen.out_conv.b"])
    if padded != frames:
        x = ad.slice_(x, (slice(None), slice(None), slice(0, frames)))
    spec_out = ad.add(spec, _image_to_spec(x, batch, frames, bins))
    return ad.istft_op(spec_out, cfg.stft, n)


def params_to_tensors(params: dict[str, np.ndarray],
                      names: list[str] | None = None) -> dict[str, ad.Tensor]:
    names = names or list(params)
    return {n: ad.parameter(np.asarray(params[n], dtype=np.float64), name=n)
            for n in names}


class GeneratorInference:
    """Float64 block processor over spectrogram frames.

    process_frames consumes blocks of block_frames frames and is exactly
    resumable: splitting a signal into blocks and carrying the states
    gives bit-identical results to one whole-signal call.
    """

    def __init__(self, cfg: GeneratorConfig, params: dict):
        if cfg.bidirectional:
            raise ContractError("bidirectional generators cannot stream")
        check_params(cfg, params)
        self.cfg = cfg

        def arr(name):
            v = params[name]
            data = v.data if isinstance(v, ad.Tensor) else v
            return np.asarray(data, dtype=np.float64)

        self.in_w, self.in_b = arr("gen.in_conv.w")[:, :, 0], arr("gen.in_conv.b")
        self.out_w, self.out_b = arr("gen.out_conv.w")[:, :, 0], arr("gen.out_conv.b")
        self.enc = [(arr(f"gen.enc{i}.conv.w"), arr(f"gen.enc{i}.conv.b"))
                    for i in range(cfg.depth)]
        self.dec = [(arr(f"gen.dec{i}.conv.w"), arr(f"gen.dec{i}.conv.b"))
                    for i in range(cfg.depth)]
        self.layers = [mamba.MambaLayerInference(cfg.mamba_layer(i), params,
                                                 f"gen.enc{i}.mamba")
                       for i in range(cfg.depth)]

    def init_states(self) -> list[mamba.MambaLayerState]:
        return [layer.init_state() for layer in self.layers]

    def state_bytes(self, states) -> int:
        return sum(s.nbytes() for s in states)

    @staticmethod
    def _glu(x: np.ndarray) -> np.ndarray:
        half = x.shape[0] // 2
        return x[:half] / (1.0 + np.exp(-x[half:]))

    def process_frames(self, x: np.ndarray, states: list):
        """x (2*bins, F) -> (residual spectrogram image (2*bins, F), states').
        F must be a multiple of block_frames."""
        if x.ndim != 2 or x.shape[0] != self.cfg.spec_channels:
            raise ArgumentError(f"expected ({self.cfg.spec_channels}, F) image, "
                                f"got {x.shape}")
        if x.shape[1] % self.cfg.block_frames != 0:
            raise ArgumentError(
                f"frame count {x.shape[1]} is not a multiple of "
                f"{self.cfg.block_frames}")
        s = self.cfg.stride
        x = np.einsum("oi,il->ol", self.in_w, x, optimize=False) + self.in_b[:, None]
        skips = []
        new_states = []
        for i in range(self.cfg.depth):
            skips.append(x)
            w, b = self.enc[i]
            cols = x.reshape(x.shape[0], x.shape[1] // s, s)
            x = np.einsum("oik,ilk->ol", w, cols, optimize=False) + b[:, None]
            x = self._glu(x)
            y, st = self.layers[i].forward(x.T, states[i])
            new_states.append(st)
            x = np.ascontiguousarray(y.T)
        for i in reversed(range(self.cfg.depth)):
            w, b = self.dec[i]
            up = np.einsum("iok,il->olk", w, x, optimize=False)
            x = up.reshape(up.shape[0], -1) + b[:, None]
            x = self._glu(x)
            x = x + skips[i]
        out = np.einsum("oi,il->ol", self.out_w, x, optimize=False)
        return out + self.out_b[:, None], new_states
