from .config import TrainConfig, load_train_config, save_train_config
from .data import (HF_CUTOFF_HZ, hf_energy_fraction, paired_dataset,
                   synth_dataset, synth_track)
from .loop import FitResult, fit, round_f32, split_pairs
from .losses import (LAMBDA_FMAP, LossReport, loss_adversarial_g,
                     loss_discriminator, loss_feature_matching,
                     loss_generator_total, loss_reconstruction)

__all__ = [
    "TrainConfig", "load_train_config", "save_train_config",
    "HF_CUTOFF_HZ", "hf_energy_fraction", "paired_dataset", "synth_dataset",
    "synth_track",
    "FitResult", "fit", "round_f32", "split_pairs",
    "LAMBDA_FMAP", "LossReport", "loss_adversarial_g", "loss_discriminator",
    "loss_feature_matching", "loss_generator_total", "loss_reconstruction",
]
