"""Gated selective-SSM sequence block.

y = x + out_proj( SSM(silu(causal_conv(x_branch))) * silu(z_branch) )
with (x_branch, z_branch) = split(in_proj(rms_norm(x))).

Two faces share the same parameters: a training forward that builds an
autodiff graph (the scan is a single custom node backed by the analytic
ssm.scan_backward), and a float64 inference forward whose chunked /
single-step folding is bit-identical to a whole-sequence call (all
pointwise maps use einsum, the scan folds one shared step kernel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from .. import ssm
from ..errors import ArgumentError, ContractError

RMS_EPS = 1e-6


@dataclass(frozen=True)
class MambaLayerConfig:
    d_model: int
    expand: int = 2
    conv_kernel: int = 4
    d_state: int = 16
    bidirectional: bool = False

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def d_rank(self) -> int:
        return ssm.default_rank(self.d_inner)


def param_specs(cfg: MambaLayerConfig, prefix: str) -> list[tuple[str, tuple]]:
    d, di, n, r = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.d_rank
    return [
        (f"{prefix}.norm_gamma", (d,)),
        (f"{prefix}.in_proj.w", (2 * di, d)),
        (f"{prefix}.in_proj.b", (2 * di,)),
        (f"{prefix}.conv.w", (di, cfg.conv_kernel)),
        (f"{prefix}.conv.b", (di,)),
        (f"{prefix}.ssm.A_log", (di, n)),
        (f"{prefix}.ssm.D", (di,)),
        (f"{prefix}.ssm.W_B", (n, di)),
        (f"{prefix}.ssm.W_C", (n, di)),
        (f"{prefix}.ssm.W_delta_down", (r, di)),
        (f"{prefix}.ssm.W_delta_up", (di, r)),
        (f"{prefix}.ssm.b_delta", (di,)),
        (f"{prefix}.out_proj.w", (d, di)),
        (f"{prefix}.out_proj.b", (d,)),
    ]


def init_params(cfg: MambaLayerConfig, prefix: str,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, di = cfg.d_model, cfg.d_inner
    sp = ssm.init_params(di, cfg.d_state, cfg.d_rank, rng)
    return {
        f"{prefix}.norm_gamma": np.ones(d),
        f"{prefix}.in_proj.w": rng.normal(0.0, 1.0 / math.sqrt(d), size=(2 * di, d)),
        f"{prefix}.in_proj.b": np.zeros(2 * di),
        f"{prefix}.conv.w": rng.normal(0.0, 1.0 / math.sqrt(cfg.conv_kernel),
                                       size=(di, cfg.conv_kernel)),
        f"{prefix}.conv.b": np.zeros(di),
        f"{prefix}.ssm.A_log": sp.A_log,
        f"{prefix}.ssm.D": sp.D,
        f"{prefix}.ssm.W_B": sp.W_B,
        f"{prefix}.ssm.W_C": sp.W_C,
        f"{prefix}.ssm.W_delta_down": sp.W_delta_down,
        f"{prefix}.ssm.W_delta_up": sp.W_delta_up,
        f"{prefix}.ssm.b_delta": sp.b_delta,
        # small (not zero) so gradients reach the inner branch from step one
        f"{prefix}.out_proj.w": rng.normal(0.0, 0.02, size=(d, di)),
        f"{prefix}.out_proj.b": np.zeros(d),
    }


def _ssm_params_from(params, prefix: str) -> ssm.SsmParams:
    def arr(key):
        v = params[f"{prefix}.ssm.{key}"]
        return v.data if isinstance(v, ad.Tensor) else v

    return ssm.SsmParams(
        A_log=arr("A_log"), D=arr("D"), W_B=arr("W_B"), W_C=arr("W_C"),
        W_delta_down=arr("W_delta_down"), W_delta_up=arr("W_delta_up"),
        b_delta=arr("b_delta"))


_SSM_FIELDS = ["A_log", "D", "W_B", "W_C", "W_delta_down", "W_delta_up", "b_delta"]


def selective_scan_op(x: ad.Tensor, params: dict[str, ad.Tensor], prefix: str,
                      reverse: bool = False) -> ad.Tensor:
    """Batched selective scan as one autodiff node; backward delegates to
    the analytic ssm.scan_backward per batch item."""
    sp = _ssm_params_from(params, prefix)
    if x.data.ndim != 3 or x.data.shape[2] != sp.d_inner:
        raise ArgumentError(f"selective_scan_op: expected (B, L, {sp.d_inner}), "
                            f"got {x.data.shape}")
    batch = x.data.shape[0]
    param_tensors = [params[f"{prefix}.ssm.{f}"] for f in _SSM_FIELDS]
    y = np.empty_like(x.data)
    saved = []
    for b in range(batch):
        xb = x.data[b][::-1] if reverse else x.data[b]
        yb, _, sb = ssm.scan_sequential(sp, np.ascontiguousarray(xb), save=True)
        y[b] = yb[::-1] if reverse else yb
        saved.append(sb)

    def bwd(g):
        gx = np.empty_like(x.data)
        pgrads = None
        for b in range(batch):
            gb = g[b][::-1] if reverse else g[b]
            grads = ssm.scan_backward(sp, np.ascontiguousarray(gb), saved[b])
            gx[b] = grads["x"][::-1] if reverse else grads["x"]
            if pgrads is None:
                pgrads = {f: grads[f] for f in _SSM_FIELDS}
            else:
                for f in _SSM_FIELDS:
                    pgrads[f] += grads[f]
        ad._accumulate(x, gx)
        for f, t in zip(_SSM_FIELDS, param_tensors):
            ad._accumulate(t, pgrads[f])

    return ad._node(y, tuple([x] + param_tensors), bwd)


def forward_train(cfg: MambaLayerConfig, params: dict[str, ad.Tensor], prefix: str,
                  x: ad.Tensor) -> ad.Tensor:
    """Training-graph forward over x (B, L, d_model)."""
    di = cfg.d_inner
    h = ad.rms_norm(x, params[f"{prefix}.norm_gamma"], eps=RMS_EPS)
    proj = ad.linear(h, params[f"{prefix}.in_proj.w"], params[f"{prefix}.in_proj.b"])
    xb = ad.slice_(proj, (slice(None), slice(None), slice(0, di)))
    zb = ad.slice_(proj, (slice(None), slice(None), slice(di, 2 * di)))
    xb = ad.moveaxis(xb, 1, 2)
    xb = ad.depthwise_causal_conv1d(xb, params[f"{prefix}.conv.w"],
                                    params[f"{prefix}.conv.b"])
    xb = ad.silu(ad.moveaxis(xb, 1, 2))
    inner = selective_scan_op(xb, params, prefix)
    if cfg.bidirectional:
        inner = ad.add(inner, selective_scan_op(xb, params, prefix, reverse=True))
    gated = ad.mul(inner, ad.silu(zb))
    out = ad.linear(gated, params[f"{prefix}.out_proj.w"], params[f"{prefix}.out_proj.b"])
    return ad.add(x, out)


def _ein(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # optimize=False keeps per-row results independent of sequence length,
    # which makes chunked streaming bit-identical to whole-sequence calls
    return np.einsum("ld,ed->le", x, w, optimize=False)


@dataclass
class MambaLayerState:
    ssm_state: ssm.SsmState
    conv_tail: np.ndarray  # (conv_kernel - 1, d_inner), newest row last

    def nbytes(self) -> int:
        return self.ssm_state.nbytes() + self.conv_tail.nbytes


class MambaLayerInference:
    """Float64 inference face; carrying state across calls is bit-identical
    to one whole-sequence call."""

    def __init__(self, cfg: MambaLayerConfig, params: dict, prefix: str):
        if cfg.bidirectional:
            raise ContractError("bidirectional layers cannot run incrementally")
        self.cfg = cfg

        def arr(key):
            v = params[f"{prefix}.{key}"]
            data = v.data if isinstance(v, ad.Tensor) else v
            return np.asarray(data, dtype=np.float64)

        self.norm_gamma = arr("norm_gamma")
        self.in_w, self.in_b = arr("in_proj.w"), arr("in_proj.b")
        self.conv_w, self.conv_b = arr("conv.w"), arr("conv.b")
        self.out_w, self.out_b = arr("out_proj.w"), arr("out_proj.b")
        self.ssm_params = ssm.SsmParams(
            A_log=arr("ssm.A_log"), D=arr("ssm.D"), W_B=arr("ssm.W_B"),
            W_C=arr("ssm.W_C"), W_delta_down=arr("ssm.W_delta_down"),
            W_delta_up=arr("ssm.W_delta_up"), b_delta=arr("ssm.b_delta"))

    def init_state(self) -> MambaLayerState:
        return MambaLayerState(
            ssm_state=ssm.init_state(self.ssm_params),
            conv_tail=np.zeros((self.cfg.conv_kernel - 1, self.cfg.d_inner)))

    def forward(self, x: np.ndarray, state: MambaLayerState | None = None):
        """x (L, d_model) -> (y (L, d_model), state')."""
        if x.ndim != 2 or x.shape[1] != self.cfg.d_model:
            raise ArgumentError(f"expected (L, {self.cfg.d_model}), got {x.shape}")
        if state is None:
            state = self.init_state()
        length = x.shape[0]
        di = self.cfg.d_inner
        k = self.cfg.conv_kernel

        r = np.sqrt(np.mean(x * x, axis=1, keepdims=True) + RMS_EPS)
        h = x / r * self.norm_gamma
        proj = _ein(h, self.in_w) + self.in_b
        xb, zb = proj[:, :di], proj[:, di:]

        ext = np.concatenate([state.conv_tail, xb], axis=0)
        conv = np.broadcast_to(self.conv_b, (length, di)).copy()
        for kk in range(k):
            conv += self.conv_w[:, kk] * ext[kk:kk + length]
        conv_tail = ext[-(k - 1):].copy()

        xs = conv / (1.0 + np.exp(-conv))  # silu
        ssm_state = state.ssm_state
        inner = np.empty_like(xs)
        for t in range(length):
            y_t, h_new, _ = ssm._step_kernel(self.ssm_params, xs[t], ssm_state.h)
            inner[t] = y_t
            ssm_state = ssm.SsmState(h=h_new, position=ssm_state.position + 1)

        gated = inner * (zb / (1.0 + np.exp(-zb)))
        out = _ein(gated, self.out_w) + self.out_b
        return x + out, MambaLayerState(ssm_state=ssm_state, conv_tail=conv_tail)
