from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .config import MDRConfig, ModelConfig, paper_scale_config, tiny_config, toy_config
from .mdr import MDRBlock
from .network import (
    DepthDecompositionNet,
    EncoderPyramid,
    NetworkOutput,
    count_parameters,
    fuse,
)

__all__ = [
    "DepthDecompositionNet",
    "EncoderPyramid",
    "MDRBlock",
    "MDRConfig",
    "ModelConfig",
    "NetworkOutput",
    "count_parameters",
    "fuse",
    "load_checkpoint",
    "load_model",
    "paper_scale_config",
    "save_checkpoint",
    "tiny_config",
    "toy_config",
]
