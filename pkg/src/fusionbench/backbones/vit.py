"""ViT-style image encoder with per-layer taps.

Pre-norm blocks with a class token; per_layer[i] is the output of block
i+1 over the full (class + patch) token sequence, and the pooled feature
is the class-token state after the final norm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn as nn

from ..errors import ConfigurationError, ShapeError
from .base import LayerOutputs
from .layers import TransformerEncoderLayer, init_transformer_weights


@dataclass(frozen=True)
class VitBackboneConfig:
    patch_size: int = 8
    input_resolution: int = 64
    num_layers: int = 8
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.1

    def validate(self) -> "VitBackboneConfig":
        for field in ("patch_size", "input_resolution", "num_layers", "hidden_dim", "num_heads", "ff_dim"):
            if getattr(self, field) <= 0:
                raise ConfigurationError(f"vit backbone: {field} must be a positive integer")
        if self.input_resolution % self.patch_size != 0:
            raise ConfigurationError(
                "vit backbone: input_resolution mod patch_size = 0 violated "
                f"({self.input_resolution} % {self.patch_size} != 0)"
            )
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigurationError(
                "vit backbone: hidden_dim mod num_heads = 0 violated "
                f"({self.hidden_dim} % {self.num_heads} != 0)"
            )
        return self

    @property
    def num_patches(self) -> int:
        return (self.input_resolution // self.patch_size) ** 2

    @property
    def seq_len(self) -> int:
        return 1 + self.num_patches  # class token first


def reference_vit_config() -> VitBackboneConfig:
    """google/vit-base-patch16-224 geometry (randomly initialized here)."""
    return VitBackboneConfig(
        patch_size=16, input_resolution=224, num_layers=12,
        hidden_dim=768, num_heads=12, ff_dim=3072,
    )


class VitBackbone(nn.Module):
    kind = "vit"

    def __init__(self, cfg: VitBackboneConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.patch_embed = nn.Conv2d(
            3, cfg.hidden_dim, kernel_size=cfg.patch_size, stride=cfg.patch_size
        )
        self.cls_token = nn.Parameter(torch.zeros(1, 1, cfg.hidden_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.seq_len, cfg.hidden_dim))
        self.embedding_dropout = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(
            TransformerEncoderLayer(
                cfg.hidden_dim, cfg.num_heads, cfg.ff_dim, cfg.dropout, norm_first=True
            )
            for _ in range(cfg.num_layers)
        )
        self.final_norm = nn.LayerNorm(cfg.hidden_dim)
        init_transformer_weights(self)
        nn.init.normal_(self.cls_token, std=0.02)
        nn.init.normal_(self.pos_embed, std=0.02)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def feature_width(self) -> int:
        return self.cfg.hidden_dim

    def truncate_(self, depth: int) -> "VitBackbone":
        if not 1 <= depth <= len(self.layers):
            raise ConfigurationError(
                f"cannot truncate vit backbone of depth {len(self.layers)} to {depth}"
            )
        if depth < len(self.layers):
            self.layers = nn.ModuleList(list(self.layers)[:depth])
            self.cfg = replace(self.cfg, num_layers=depth)
        return self

    def forward(self, image: torch.Tensor, keep_attention: bool = False) -> LayerOutputs:
        if image.dim() != 4:
            raise ShapeError(f"image must be (B, C, H, W), got shape {tuple(image.shape)}")
        res = self.cfg.input_resolution
        if image.shape[-2:] != (res, res):
            raise ShapeError(
                f"input resolution mismatch: expected {res}x{res}, got "
                f"{image.shape[-2]}x{image.shape[-1]}"
            )
        bsz = image.shape[0]
        patches = self.patch_embed(image)  # (B, D, H/p, W/p)
        tokens = patches.flatten(2).transpose(1, 2)  # (B, P, D)
        cls = self.cls_token.expand(bsz, -1, -1)
        x = torch.cat([cls, tokens], dim=1) + self.pos_embed
        x = self.embedding_dropout(x)
        per_layer = []
        for layer in self.layers:
            x = layer(x, None, keep_attention)
            per_layer.append(x)
        pooled = self.final_norm(x)[:, 0]
        return LayerOutputs(per_layer=per_layer, final_pooled=pooled)


def build_vit_backbone(cfg: VitBackboneConfig) -> VitBackbone:
    return VitBackbone(cfg)
