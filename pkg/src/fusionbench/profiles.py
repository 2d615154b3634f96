"""Named toy-scale profiles used by tests, demos and the acceptance suite.

toy defaults (the dataclass defaults): 8-layer text encoder, 16-bottleneck
CNN at width 0.25 / 64 px, taps {4,7,8}, cut 6, 4 blocks. Trains in
minutes on CPU.

latency benchmark trio: the structural mechanism behind the latency
ordering is depth actually executed - late runs the full reference depth
(12 text layers, 16 bottlenecks), intermediate stops at max(taps) = 8,
early at the cut = 6. The trio therefore builds from 12-layer text
configs; a heavy FFN (ff_dim 1536 at hidden 64) keeps encoder layers
matmul-bound so the depth difference dominates both the analytic MAC
count and wall-clock latency, and the fast-downsampling CNN stride plan
keeps joint attention sequences short. Margins at these settings:
FLOPs(intermediate)/FLOPs(early) ~ 1.21, FLOPs(late)/FLOPs(intermediate)
~ 1.46.
"""

from __future__ import annotations

from typing import Dict, Tuple

from .backbones import CnnBackboneConfig, TextEncoderConfig, default_stage_strides
from .fusion import FusionSpec


def toy_text_config() -> TextEncoderConfig:
    return TextEncoderConfig()


def toy_cnn_config() -> CnnBackboneConfig:
    return CnnBackboneConfig()


def benchmark_text_config() -> TextEncoderConfig:
    return TextEncoderConfig(num_layers=12, ff_dim=1536)


def benchmark_cnn_config() -> CnnBackboneConfig:
    return CnnBackboneConfig(stage_strides=tuple(default_stage_strides(16, "fast")))


def benchmark_fusion_spec(strategy: str) -> FusionSpec:
    return FusionSpec(strategy=strategy)
