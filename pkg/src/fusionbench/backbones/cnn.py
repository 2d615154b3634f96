"""MobileNetV2-style inverted-residual CNN with per-bottleneck taps.

The reference geometry keeps 16 residual bottleneck layers (the classic
stage table up to the 160-channel stage), so the final feature map has
160 * width_multiplier channels: 40 at the toy width of 0.25.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import torch
import torch.nn as nn

from ..errors import ConfigurationError, ShapeError
from .base import LayerOutputs

# (expansion, out_channels, num_blocks) stages; 1+2+3+4+3+3 = 16 bottlenecks
_STAGES: Tuple[Tuple[int, int, int], ...] = (
    (1, 16, 1),
    (6, 24, 2),
    (6, 32, 3),
    (6, 64, 4),
    (6, 96, 3),
    (6, 160, 3),
)
_STEM_CHANNELS = 32

# stride-2 placed so that a 64 px toy input reaches a 4x4 map by bottleneck 6
# (16 spatial fusion tokens at the early-fusion cut) and 1x1 by bottleneck 16
_TOY_STRIDES = (1, 2, 1, 2, 1, 2, 2, 1, 1, 1, 1, 1, 1, 2, 1, 1)
# classic placement used at the 224 px reference resolution
_CLASSIC_STRIDES = (1, 2, 1, 2, 1, 1, 2, 1, 1, 1, 1, 1, 1, 2, 1, 1)
# aggressive early downsampling: 4 tokens at the cut; used by the latency
# benchmark profile where few vision tokens keep the joint sequences short
_FAST_STRIDES = (1, 2, 1, 2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 2, 1, 1)

_STRIDE_PROFILES = {"toy": _TOY_STRIDES, "classic": _CLASSIC_STRIDES, "fast": _FAST_STRIDES}


def default_stage_strides(num_bottlenecks: int = 16, profile: str = "toy") -> List[int]:
    if profile not in _STRIDE_PROFILES:
        raise ConfigurationError(f"unknown stride profile {profile!r}; use one of {sorted(_STRIDE_PROFILES)}")
    base = _STRIDE_PROFILES[profile]
    if num_bottlenecks <= len(base):
        return list(base[:num_bottlenecks])
    return list(base) + [1] * (num_bottlenecks - len(base))


def _bottleneck_plan(num_bottlenecks: int) -> List[Tuple[int, int]]:
    """Per-bottleneck (expansion, base_out_channels), extended past 16 by
    repeating the last stage spec."""
    plan: List[Tuple[int, int]] = []
    for expansion, channels, count in _STAGES:
        plan.extend((expansion, channels) for _ in range(count))
    while len(plan) < num_bottlenecks:
        plan.append(plan[-1])
    return plan[:num_bottlenecks]


def _scaled(channels: int, width_multiplier: float) -> int:
    return max(4, int(round(channels * width_multiplier)))


@dataclass(frozen=True)
class CnnBackboneConfig:
    num_bottlenecks: int = 16
    width_multiplier: float = 0.25
    input_resolution: int = 64
    stage_strides: Tuple[int, ...] = field(default_factory=lambda: _TOY_STRIDES)

    def validate(self) -> "CnnBackboneConfig":
        if self.num_bottlenecks <= 0:
            raise ConfigurationError("cnn backbone: num_bottlenecks must be a positive integer")
        if self.width_multiplier <= 0:
            raise ConfigurationError("cnn backbone: width_multiplier > 0 violated")
        if self.input_resolution <= 0:
            raise ConfigurationError("cnn backbone: input_resolution must be a positive integer")
        if len(self.stage_strides) != self.num_bottlenecks:
            raise ConfigurationError(
                f"cnn backbone: stage_strides must list one stride per bottleneck "
                f"({len(self.stage_strides)} given for {self.num_bottlenecks})"
            )
        if any(s not in (1, 2) for s in self.stage_strides):
            raise ConfigurationError("cnn backbone: stage_strides entries must be 1 or 2")
        return self

    def channels(self) -> List[int]:
        """Output channels of each bottleneck, 1-based order."""
        return [_scaled(c, self.width_multiplier) for _, c in _bottleneck_plan(self.num_bottlenecks)]

    def spatial_size(self, layer_index: int) -> int:
        """Feature-map side length after bottleneck `layer_index` (1-based);
        the stem contributes a fixed stride of 2."""
        down = 2
        for s in self.stage_strides[:layer_index]:
            down *= s
        return self.input_resolution // down


def reference_cnn_config() -> CnnBackboneConfig:
    """google/mobilenet_v2_1.4_224 geometry (randomly initialized here)."""
    return CnnBackboneConfig(
        num_bottlenecks=16, width_multiplier=1.4, input_resolution=224,
        stage_strides=_CLASSIC_STRIDES,
    )


class InvertedResidual(nn.Module):
    """expand (1x1) -> depthwise (3x3) -> project (1x1), residual at stride 1."""

    def __init__(self, in_channels: int, out_channels: int, stride: int, expansion: int):
        super().__init__()
        hidden = in_channels * expansion
        self.use_residual = stride == 1 and in_channels == out_channels
        ops: List[nn.Module] = []
        if expansion != 1:
            ops += [
                nn.Conv2d(in_channels, hidden, 1, bias=False),
                nn.BatchNorm2d(hidden),
                nn.ReLU6(inplace=False),
            ]
        ops += [
            nn.Conv2d(hidden, hidden, 3, stride=stride, padding=1, groups=hidden, bias=False),
            nn.BatchNorm2d(hidden),
            nn.ReLU6(inplace=False),
            nn.Conv2d(hidden, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
        ]
        self.block = nn.Sequential(*ops)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.block(x)
        return x + out if self.use_residual else out


class CnnBackbone(nn.Module):
    kind = "cnn"

    def __init__(self, cfg: CnnBackboneConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        stem_channels = _scaled(_STEM_CHANNELS, cfg.width_multiplier)
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_channels, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(stem_channels),
            nn.ReLU6(inplace=False),
        )
        plan = _bottleneck_plan(cfg.num_bottlenecks)
        channels = cfg.channels()
        blocks = []
        in_ch = stem_channels
        for (expansion, _), out_ch, stride in zip(plan, channels, cfg.stage_strides):
            blocks.append(InvertedResidual(in_ch, out_ch, stride, expansion))
            in_ch = out_ch
        self.bottlenecks = nn.ModuleList(blocks)
        self._init_weights()
        self._calibrate_bn_stats()

    def _init_weights(self) -> None:
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def _calibrate_bn_stats(self) -> None:
        """Seed the BN running statistics from one probe batch so that
        evaluation-mode forwards are well-scaled before any training
        (default running stats shrink activations to ~1e-6 through 16
        blocks, which would leave the vision path numerically dead in a
        freshly built fused model)."""
        g = torch.Generator().manual_seed(0)
        probe = torch.randn(8, 3, self.cfg.input_resolution, self.cfg.input_resolution, generator=g)
        momenta = []
        for m in self.modules():
            if isinstance(m, nn.BatchNorm2d):
                momenta.append((m, m.momentum))
                m.momentum = 1.0  # running stats := probe-batch stats
        was_training = self.training
        self.train()
        with torch.no_grad():
            self.forward(probe)
        for m, momentum in momenta:
            m.momentum = momentum
        self.train(was_training)

    @property
    def depth(self) -> int:
        return len(self.bottlenecks)

    @property
    def feature_width(self) -> int:
        return self.cfg.channels()[len(self.bottlenecks) - 1]

    def channels_at(self, layer_index: int) -> int:
        return self.cfg.channels()[layer_index - 1]

    def truncate_(self, depth: int) -> "CnnBackbone":
        if not 1 <= depth <= len(self.bottlenecks):
            raise ConfigurationError(
                f"cannot truncate cnn backbone of depth {len(self.bottlenecks)} to {depth}"
            )
        if depth < len(self.bottlenecks):
            self.bottlenecks = nn.ModuleList(list(self.bottlenecks)[:depth])
            self.cfg = replace(
                self.cfg,
                num_bottlenecks=depth,
                stage_strides=tuple(self.cfg.stage_strides[:depth]),
            )
        return self

    def forward(self, image: torch.Tensor) -> LayerOutputs:
        if image.dim() != 4:
            raise ShapeError(f"image must be (B, C, H, W), got shape {tuple(image.shape)}")
        res = self.cfg.input_resolution
        if image.shape[-2:] != (res, res):
            raise ShapeError(
                f"input resolution mismatch: expected {res}x{res}, got "
                f"{image.shape[-2]}x{image.shape[-1]}"
            )
        x = self.stem(image)
        per_layer = []
        for block in self.bottlenecks:
            x = block(x)
            per_layer.append(x)
        pooled = x.mean(dim=(2, 3))  # global average pool
        return LayerOutputs(per_layer=per_layer, final_pooled=pooled)


def build_cnn_backbone(cfg: CnnBackboneConfig) -> CnnBackbone:
    return CnnBackbone(cfg)
