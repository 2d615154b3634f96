from .base import LayerOutputs
from .text import TextEncoderConfig, TextEncoder, build_text_encoder
from .cnn import CnnBackboneConfig, CnnBackbone, build_cnn_backbone, default_stage_strides
from .vit import VitBackboneConfig, VitBackbone, build_vit_backbone

__all__ = [
    "LayerOutputs",
    "TextEncoderConfig",
    "TextEncoder",
    "build_text_encoder",
    "CnnBackboneConfig",
    "CnnBackbone",
    "build_cnn_backbone",
    "default_stage_strides",
    "VitBackboneConfig",
    "VitBackbone",
    "build_vit_backbone",
]
