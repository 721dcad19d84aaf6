"""Adversarial training loop: alternating discriminator/generator steps,
periodic validation on LSD, and best/last checkpointing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..dsp import lsd
from ..errors import ArgumentError, NumericError
from ..infer import enhance_array
from ..model import (GeneratorInference, config_to_text, discriminator,
                     forward_train, init_params, param_specs,
                     params_to_tensors, save_checkpoint)
from ..model.discriminator import DiscriminatorConfig
from ..optim import OptimizerState, adam_step, clip_global_norm
from .config import TrainConfig
from .data import paired_dataset
from .losses import (loss_adversarial_g, loss_discriminator,
                     loss_feature_matching, loss_generator_total,
                     loss_reconstruction)

METRICS_HEADER = "step,L_G,L_adv,L_rec,L_fmap,L_D,val_lsd"


@dataclass
class FitResult:
    best_checkpoint: Path
    last_checkpoint: Path
    metrics_csv: Path
    best_val_lsd: float
    baseline_lsd: float
    steps: int


def _lsd(est: np.ndarray, ref: np.ndarray, sample_rate: int) -> float:
    from ..dsp import AudioBuffer
    return lsd(AudioBuffer(samples=ref[None, :], sample_rate=sample_rate),
               AudioBuffer(samples=est[None, :], sample_rate=sample_rate))


def round_f32(params: dict[str, ad.Tensor]) -> dict[str, np.ndarray]:
    """Parameters as they will reload from a checkpoint."""
    return {k: t.data.astype(np.float32).astype(np.float64)
            for k, t in params.items()}


def _mean_val_lsd(gen_cfg, params_f32, val_pairs, sample_rate) -> float:
    model = GeneratorInference(gen_cfg, params_f32)
    scores = [_lsd(enhance_array(model, low), ref, sample_rate)
              for low, ref in val_pairs]
    return float(np.mean(scores))


def split_pairs(pairs, val_fraction):
    if not pairs:
        raise ArgumentError("dataset is empty")
    if len(pairs) == 1:
        return pairs, pairs
    n_val = min(len(pairs) - 1, max(1, int(round(val_fraction * len(pairs)))))
    return pairs[:-n_val], pairs[-n_val:]


def fit(cfg: TrainConfig, tracks, out_dir=None, progress=None) -> FitResult:
    """Train on (degraded, reference) pairs built from `tracks`.

    Writes metrics.csv plus best.ckpt / last.ckpt under out_dir and
    returns their paths.  `progress(step, report, val_lsd)` is called
    after every step when given.
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gen_cfg = cfg.generator
    sample_rate = tracks[0].sample_rate
    train_pairs, val_pairs = split_pairs(paired_dataset(tracks, cfg.low_rate),
                                         cfg.val_fraction)
    seg = cfg.segment_length
    for low, ref in train_pairs:
        if ref.size < seg:
            raise ArgumentError(
                f"track ({ref.size} samples) shorter than segment_length {seg}")

    rng = np.random.default_rng(cfg.seed)
    gen_names = [name for name, _ in param_specs(gen_cfg)]
    g_params = params_to_tensors(init_params(gen_cfg, cfg.seed), gen_names)
    g_list = [g_params[n] for n in gen_names]
    disc_cfg = DiscriminatorConfig()
    d_params = {k: ad.parameter(v, name=k)
                for k, v in discriminator.init_params(disc_cfg,
                                                      cfg.seed + 1).items()}
    d_list = list(d_params.values())
    opt_g = OptimizerState(lr=cfg.lr)
    opt_d = OptimizerState(lr=cfg.lr)

    baseline = float(np.mean([_lsd(low, ref, sample_rate)
                              for low, ref in val_pairs]))
    best_val = math.inf
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    metrics_path = out_dir / "metrics.csv"
    rows = [METRICS_HEADER]
    step = 0
    total_steps = cfg.epochs * ((len(train_pairs) + cfg.batch_size - 1)
                                // cfg.batch_size)

    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(train_pairs))
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x_low = np.empty((idx.size, seg))
            y_ref = np.empty((idx.size, seg))
            for row, i in enumerate(idx):
                low, ref = train_pairs[i]
                start = int(rng.integers(0, ref.size - seg + 1))
                x_low[row] = low[start:start + seg]
                y_ref[row] = ref[start:start + seg]
            step += 1

            # adversarial losses see a random crop of the segment, which
            # keeps discriminator cost independent of segment_length
            d_seg = seg if cfg.disc_segment <= 0 else min(cfg.disc_segment, seg)
            d_lo = int(rng.integers(0, seg - d_seg + 1))
            y_crop = y_ref[:, None, d_lo:d_lo + d_seg]

            # discriminator step on a detached fake
            fake = forward_train(gen_cfg, g_params, ad.const(x_low))
            d_real = discriminator.forward(disc_cfg, d_params,
                                           ad.const(y_crop))
            d_fake = discriminator.forward(
                disc_cfg, d_params,
                ad.const(fake.data[:, None, d_lo:d_lo + d_seg]))
            l_d = loss_discriminator(d_real, d_fake)
            if not np.isfinite(l_d.data):
                raise NumericError(f"non-finite loss at step {step}",
                                   component="L_D")
            ad.backward(l_d)
            clip_global_norm(d_list, cfg.grad_clip)
            adam_step(d_list, opt_d)

            # generator step against the updated discriminator
            d_const = {k: ad.const(t.data) for k, t in d_params.items()}
            real_feats = discriminator.forward(disc_cfg, d_const,
                                               ad.const(y_crop))
            fake_crop = ad.slice_(ad.reshape(fake, (idx.size, 1, seg)),
                                  (slice(None), slice(None),
                                   slice(d_lo, d_lo + d_seg)))
            d_fake_g = discriminator.forward(disc_cfg, d_params, fake_crop)
            l_adv = loss_adversarial_g(d_fake_g)
            l_rec = loss_reconstruction(fake, ad.const(y_ref))
            l_fmap = loss_feature_matching(real_feats, d_fake_g)
            total = ad.add(ad.add(l_adv, l_rec),
                           ad.scale(l_fmap, cfg.lambda_fmap))
            ad.backward(total)
            for t in d_list:
                t.grad = None  # discriminator grads from the G pass are unused
            clip_global_norm(g_list, cfg.grad_clip)
            adam_step(g_list, opt_g)

            report = loss_generator_total(float(l_adv.data), float(l_rec.data),
                                          float(l_fmap.data), cfg.lambda_fmap,
                                          float(l_d.data))

            val_lsd = None
            if step % cfg.val_every == 0 or step == total_steps:
                snap = round_f32(g_params)
                val_lsd = _mean_val_lsd(gen_cfg, snap, val_pairs, sample_rate)
                if val_lsd < best_val:
                    best_val = val_lsd
                    save_checkpoint(best_path, snap, config_to_text(gen_cfg))
            rows.append(",".join(
                [str(step)] + [repr(v) for v in report.csv_fields()]
                + ["" if val_lsd is None else repr(val_lsd)]))
            if progress is not None:
                progress(step, report, val_lsd)

    save_checkpoint(last_path, round_f32(g_params), config_to_text(gen_cfg))
    if not best_path.exists():
        save_checkpoint(best_path, round_f32(g_params), config_to_text(gen_cfg))
        best_val = _mean_val_lsd(gen_cfg, round_f32(g_params), val_pairs,
                                 sample_rate)
    metrics_path.write_text("\n".join(rows) + "\n")
    return FitResult(best_checkpoint=best_path, last_checkpoint=last_path,
                     metrics_csv=metrics_path, best_val_lsd=best_val,
                     baseline_lsd=baseline, steps=step)
