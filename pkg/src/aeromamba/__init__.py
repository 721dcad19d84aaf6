"""Audio super-resolution toolkit: spectral U-Net generator with selective
state-space layers in every encoder block, adversarial training, and
constant-memory streaming inference."""

__version__ = "0.1.0"
