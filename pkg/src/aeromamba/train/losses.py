"""Generator and discriminator objectives.

The generator total is L_G = L_adv + L_rec + lambda * L_fmap with
lambda = 100; the discriminator uses the multi-scale hinge loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .. import autodiff as ad
from ..dsp import StftConfig
from ..errors import ArgumentError, ContractError, NumericError

LAMBDA_FMAP = 100.0
REC_STFT = StftConfig(512, 256)
MAG_FLOOR = 1e-7
IDENTITY_RTOL = 1e-9


@dataclass(frozen=True)
class LossReport:
    L_adv: float
    L_rec: float
    L_fmap: float
    lambda_: float
    L_G: float
    L_D: float = 0.0

    def __post_init__(self):
        expected = self.L_adv + self.L_rec + self.lambda_ * self.L_fmap
        if abs(self.L_G - expected) > IDENTITY_RTOL * max(1.0, abs(expected)):
            raise ContractError(
                f"loss identity violated: L_G={self.L_G!r} but components "
                f"sum to {expected!r}")
        if self.L_D < 0:
            raise ContractError(f"hinge L_D must be >= 0, got {self.L_D!r}")

    def csv_fields(self) -> list[float]:
        return [self.L_G, self.L_adv, self.L_rec, self.L_fmap, self.L_D]


def loss_reconstruction(estimate: ad.Tensor, reference: ad.Tensor,
                        stft_cfg: StftConfig = REC_STFT) -> ad.Tensor:
    """L1 waveform distance plus L1 log-magnitude STFT distance, equally
    weighted; magnitudes are floored at 1e-7."""
    if estimate.data.shape != reference.data.shape:
        raise ArgumentError(
            f"length mismatch: {estimate.data.shape} vs {reference.data.shape}")

    def log_mag(wav):
        spec = ad.stft_op(wav, stft_cfg)
        re = ad.slice_(spec, (slice(None), slice(0, 1)))
        im = ad.slice_(spec, (slice(None), slice(1, 2)))
        power = ad.add(ad.mul(re, re), ad.mul(im, im))
        return ad.log(ad.sqrt(power, eps=MAG_FLOOR ** 2))

    wave_term = ad.l1(estimate, reference)
    spec_term = ad.l1(log_mag(estimate), log_mag(reference))
    return ad.add(wave_term, spec_term)


def _check_scales(outputs, name):
    if not outputs:
        raise ContractError(f"{name}: no discriminator scales")
    for scale in outputs:
        if "logits" not in scale or "features" not in scale:
            raise ContractError(f"{name}: malformed discriminator output")


def loss_feature_matching(real_outputs, fake_outputs) -> ad.Tensor:
    """Sum over scales and layers of the mean absolute feature difference;
    the real branch is treated as a constant target."""
    _check_scales(real_outputs, "loss_feature_matching")
    _check_scales(fake_outputs, "loss_feature_matching")
    if len(real_outputs) != len(fake_outputs):
        raise ContractError("loss_feature_matching: scale count mismatch")
    total = None
    for real, fake in zip(real_outputs, fake_outputs):
        if len(real["features"]) != len(fake["features"]):
            raise ContractError("loss_feature_matching: layer count mismatch")
        for fr, ff in zip(real["features"], fake["features"]):
            if fr.data.shape != ff.data.shape:
                raise ContractError(
                    f"loss_feature_matching: feature shape mismatch "
                    f"{fr.data.shape} vs {ff.data.shape}")
            term = ad.l1(ff, ad.const(fr.data))
            total = term if total is None else ad.add(total, term)
    return total


def loss_adversarial_g(fake_outputs) -> ad.Tensor:
    """Hinge generator loss: sum over scales of mean(relu(1 - D(fake)))."""
    _check_scales(fake_outputs, "loss_adversarial_g")
    total = None
    for scale in fake_outputs:
        term = ad.mean(ad.relu(ad.sub(ad.const(1.0), scale["logits"])))
        total = term if total is None else ad.add(total, term)
    return total


def loss_discriminator(real_outputs, fake_outputs) -> ad.Tensor:
    """Hinge discriminator loss over all scales."""
    _check_scales(real_outputs, "loss_discriminator")
    _check_scales(fake_outputs, "loss_discriminator")
    if len(real_outputs) != len(fake_outputs):
        raise ContractError("loss_discriminator: scale count mismatch")
    total = None
    for real, fake in zip(real_outputs, fake_outputs):
        t_real = ad.mean(ad.relu(ad.sub(ad.const(1.0), real["logits"])))
        t_fake = ad.mean(ad.relu(ad.add(ad.const(1.0), fake["logits"])))
        term = ad.add(t_real, t_fake)
        total = term if total is None else ad.add(total, term)
    return total


def loss_generator_total(l_adv: float, l_rec: float, l_fmap: float,
                         lambda_: float = LAMBDA_FMAP,
                         l_d: float = 0.0) -> LossReport:
    for name, value in [("L_adv", l_adv), ("L_rec", l_rec), ("L_fmap", l_fmap)]:
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss {value!r}", component=name)
    return LossReport(L_adv=l_adv, L_rec=l_rec, L_fmap=l_fmap, lambda_=lambda_,
                      L_G=l_adv + l_rec + lambda_ * l_fmap, L_D=l_d)
