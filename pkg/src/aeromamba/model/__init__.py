from . import checkpoint, discriminator, mamba
from .checkpoint import load_checkpoint, save_checkpoint
from .discriminator import DiscriminatorConfig
from .generator import (GeneratorConfig, GeneratorInference, check_params,
                        config_from_text, config_to_text, forward_train,
                        init_params, param_count, param_specs,
                        params_to_tensors)
from .mamba import (MambaLayerConfig, MambaLayerInference, MambaLayerState,
                    selective_scan_op)

__all__ = [
    "checkpoint", "discriminator", "mamba",
    "load_checkpoint", "save_checkpoint",
    "DiscriminatorConfig",
    "GeneratorConfig", "GeneratorInference", "check_params",
    "config_from_text", "config_to_text", "forward_train", "init_params",
    "param_count", "param_specs", "params_to_tensors",
    "MambaLayerConfig", "MambaLayerInference", "MambaLayerState",
    "selective_scan_op",
]
