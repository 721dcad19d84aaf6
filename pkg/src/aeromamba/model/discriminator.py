"""Multi-scale waveform discriminator.

Identical stacks of strided 1-D convolutions with leaky-ReLU (slope 0.2)
judge the waveform at progressively average-pooled scales.  Each stack
exposes its intermediate feature maps for the feature-matching loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import ArgumentError

LEAK = 0.2

# (kernel, stride, groups, in_channels, out_channels) per feature layer
_LAYERS = [
    (15, 1, 1, 1, 16),
    (8, 4, 4, 16, 64),
    (8, 4, 8, 64, 64),
    (8, 4, 8, 64, 64),
    (5, 1, 1, 64, 64),
    (3, 1, 1, 64, 64),
]
_FINAL = (3, 1, 1, 64, 1)


@dataclass(frozen=True)
class DiscriminatorConfig:
    scales: int = 3
    pool_kernel: int = 4
    pool_stride: int = 2

    @property
    def min_input_length(self) -> int:
        """Smallest input giving every scale a full receptive field."""
        rf = 1
        for k, s, _, _, _ in reversed(_LAYERS + [_FINAL]):
            rf = (rf - 1) * s + k
        return rf * self.pool_stride ** (self.scales - 1)


def param_specs(cfg: DiscriminatorConfig) -> list[tuple[str, tuple]]:
    specs = []
    for s in range(cfg.scales):
        for li, (k, _, g, cin, cout) in enumerate(_LAYERS + [_FINAL]):
            specs += [(f"disc.s{s}.l{li}.w", (cout, cin // g, k)),
                      (f"disc.s{s}.l{li}.b", (cout,))]
    return specs


def init_params(cfg: DiscriminatorConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_specs(cfg):
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[1] * shape[2]
            params[name] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=shape)
    return params


def forward(cfg: DiscriminatorConfig, params: dict, wav: ad.Tensor):
    """wav (B, 1, L) -> list of per-scale dicts {"features": [...], "logits"}."""
    if wav.data.ndim != 3 or wav.data.shape[1] != 1:
        raise ArgumentError(f"expected (B, 1, L) waveform, got {wav.data.shape}")
    if wav.data.shape[2] < cfg.min_input_length:
        raise ArgumentError(
            f"input length {wav.data.shape[2]} below receptive field "
            f"{cfg.min_input_length}")
    outputs = []
    x_scale = wav
    for s in range(cfg.scales):
        if s > 0:
            x_scale = ad.avg_pool1d(x_scale, kernel=cfg.pool_kernel,
                                    stride=cfg.pool_stride,
                                    padding=cfg.pool_kernel // 2)
        x = x_scale
        features = []
        for li, (k, stride, groups, _, _) in enumerate(_LAYERS):
            x = ad.conv1d(x, params[f"disc.s{s}.l{li}.w"],
                          params[f"disc.s{s}.l{li}.b"],
                          stride=stride, padding=k // 2, groups=groups)
            x = ad.leaky_relu(x, LEAK)
            features.append(x)
        li = len(_LAYERS)
        k = _FINAL[0]
        logits = ad.conv1d(x, params[f"disc.s{s}.l{li}.w"],
                           params[f"disc.s{s}.l{li}.b"], padding=k // 2)
        outputs.append({"features": features, "logits": logits})
    return outputs
