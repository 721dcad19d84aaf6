"""Training configuration, loadable from an INI-style file."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from ..errors import ArgumentError
from ..model import GeneratorConfig


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    batch_size: int = 2
    segment_length: int = 65024
    epochs: int = 50
    seed: int = 0
    val_every: int = 25
    checkpoint_dir: str = "checkpoints"
    lambda_fmap: float = 100.0
    grad_clip: float = 5.0
    low_rate: int = 11025
    val_fraction: float = 0.25
    disc_segment: int = 16384  # adversarial losses see crops this long (0 = full)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        if self.lr <= 0:
            raise ArgumentError(f"lr must be > 0, got {self.lr}")
        if self.segment_length < 4 * self.generator.window_size:
            raise ArgumentError(
                f"segment_length {self.segment_length} below minimum "
                f"{4 * self.generator.window_size}")
        if self.batch_size < 1 or self.epochs < 1 or self.val_every < 1:
            raise ArgumentError("batch_size, epochs and val_every must be >= 1")


_INT_GEN = {f.name for f in dataclasses.fields(GeneratorConfig)}


def load_train_config(path) -> TrainConfig:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    kwargs = {}
    if parser.has_section("train"):
        for f in dataclasses.fields(TrainConfig):
            if f.name == "generator" or not parser.has_option("train", f.name):
                continue
            kwargs[f.name] = _coerce(f, parser.get("train", f.name))
    gen_kwargs = {}
    if parser.has_section("generator"):
        for key, raw in parser.items("generator"):
            if key not in _INT_GEN:
                raise ArgumentError(f"unknown generator option {key!r}")
            gen_kwargs[key] = (raw.lower() in ("1", "true", "yes")
                               if key == "bidirectional" else int(raw))
    kwargs["generator"] = GeneratorConfig(**gen_kwargs)
    return TrainConfig(**kwargs)


def _coerce(f: dataclasses.Field, raw: str):
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    return raw


def save_train_config(path, cfg: TrainConfig) -> None:
    parser = configparser.ConfigParser()
    parser.add_section("train")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "generator":
            continue
        parser.set("train", f.name, str(getattr(cfg, f.name)))
    parser.add_section("generator")
    for f in dataclasses.fields(GeneratorConfig):
        parser.set("generator", f.name, str(int(getattr(cfg.generator, f.name))))
    with open(path, "w") as fh:
        parser.write(fh)
