"""BERT-style text encoder with per-layer taps.

Reference depth is 12 layers; the toy default trains in minutes on CPU
while keeping taps {4, 7, 8} and the cut at 6 meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch
import torch.nn as nn

from ..errors import ConfigurationError, ShapeError
from .base import LayerOutputs
from .layers import TransformerEncoderLayer, additive_mask, init_transformer_weights


@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int = 1000
    max_seq_len: int = 32
    num_layers: int = 8
    hidden_dim: int = 64
    num_heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.1

    def validate(self) -> "TextEncoderConfig":
        for field in ("vocab_size", "max_seq_len", "num_layers", "hidden_dim", "num_heads", "ff_dim"):
            if getattr(self, field) <= 0:
                raise ConfigurationError(f"text encoder: {field} must be a positive integer")
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigurationError(
                "text encoder: hidden_dim mod num_heads = 0 violated "
                f"({self.hidden_dim} % {self.num_heads} != 0)"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("text encoder: dropout must be in [0, 1)")
        return self


def reference_text_config() -> TextEncoderConfig:
    """bert-base-uncased geometry (randomly initialized at this scale)."""
    return TextEncoderConfig(
        vocab_size=30522, max_seq_len=128, num_layers=12,
        hidden_dim=768, num_heads=12, ff_dim=3072,
    )


class TextEncoder(nn.Module):
    kind = "text"

    def __init__(self, cfg: TextEncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.hidden_dim)
        self.position_embedding = nn.Embedding(cfg.max_seq_len, cfg.hidden_dim)
        self.embedding_norm = nn.LayerNorm(cfg.hidden_dim)
        self.embedding_dropout = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(
            TransformerEncoderLayer(
                cfg.hidden_dim, cfg.num_heads, cfg.ff_dim, cfg.dropout, norm_first=False
            )
            for _ in range(cfg.num_layers)
        )
        # pooling function: learned transform of the first-token state
        self.pooler = nn.Linear(cfg.hidden_dim, cfg.hidden_dim)
        init_transformer_weights(self)
        self.register_buffer(
            "position_ids", torch.arange(cfg.max_seq_len).unsqueeze(0), persistent=False
        )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def feature_width(self) -> int:
        return self.cfg.hidden_dim

    def truncate_(self, depth: int) -> "TextEncoder":
        """Drop layers beyond `depth` so they leave the parameter registry."""
        if not 1 <= depth <= len(self.layers):
            raise ConfigurationError(
                f"cannot truncate text encoder of depth {len(self.layers)} to {depth}"
            )
        if depth < len(self.layers):
            self.layers = nn.ModuleList(list(self.layers)[:depth])
            self.cfg = replace(self.cfg, num_layers=depth)
        return self

    def forward(
        self,
        tokens: torch.Tensor,
        mask: torch.Tensor | None = None,
        keep_attention: bool = False,
    ) -> LayerOutputs:
        if tokens.dim() != 2:
            raise ShapeError(f"tokens must be (B, L), got shape {tuple(tokens.shape)}")
        if tokens.shape[1] > self.cfg.max_seq_len:
            raise ShapeError(
                f"sequence length {tokens.shape[1]} exceeds max_seq_len {self.cfg.max_seq_len}"
            )
        seq = tokens.shape[1]
        x = self.token_embedding(tokens) + self.position_embedding(self.position_ids[:, :seq])
        x = self.embedding_dropout(self.embedding_norm(x))
        bias = additive_mask(mask) if mask is not None else None
        per_layer = []
        for layer in self.layers:
            x = layer(x, bias, keep_attention)
            per_layer.append(x)
        pooled = torch.tanh(self.pooler(x[:, 0]))
        return LayerOutputs(per_layer=per_layer, final_pooled=pooled)


def build_text_encoder(cfg: TextEncoderConfig) -> TextEncoder:
    return TextEncoder(cfg)
