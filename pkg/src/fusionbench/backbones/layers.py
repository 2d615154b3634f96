"""Transformer building blocks shared by the text encoder, ViT and fusion.

The attention implementation is deliberately explicit (separate q/k/v/o
linears, manual softmax) so that per-layer attention weights can be probed,
FLOPs counted analytically, and the graph exported to the exchange format
without opaque fused ops.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from ..errors import ConfigurationError, ShapeError

# additive mask value for padded positions; large negative but finite so
# float32 softmax stays well-behaved
MASK_FILL = -1.0e9


def additive_mask(pad_mask: torch.Tensor) -> torch.Tensor:
    """(B, L) 1/0 keep-mask -> (B, 1, 1, L) additive attention bias."""
    return ((1.0 - pad_mask.float()) * MASK_FILL).unsqueeze(1).unsqueeze(2)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, model_dim: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        if model_dim % num_heads != 0:
            raise ConfigurationError(
                f"hidden_dim mod num_heads = 0 violated: {model_dim} % {num_heads} != 0"
            )
        self.model_dim = model_dim
        self.num_heads = num_heads
        self.head_dim = model_dim // num_heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.q_proj = nn.Linear(model_dim, model_dim)
        self.k_proj = nn.Linear(model_dim, model_dim)
        self.v_proj = nn.Linear(model_dim, model_dim)
        self.out_proj = nn.Linear(model_dim, model_dim)
        self.dropout = nn.Dropout(dropout)
        # populated on forward when requested; used by tests and the FLOP counter
        self.last_attention: torch.Tensor | None = None
        self.last_seq_len: int | None = None

    def forward(
        self,
        x: torch.Tensor,
        attn_bias: torch.Tensor | None = None,
        keep_attention: bool = False,
    ) -> torch.Tensor:
        if x.shape[-1] != self.model_dim:
            raise ShapeError(
                f"attention expects feature width {self.model_dim}, got {x.shape[-1]}"
            )
        bsz, seq, _ = x.shape
        q = self.q_proj(x).view(bsz, seq, self.num_heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(x).view(bsz, seq, self.num_heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(x).view(bsz, seq, self.num_heads, self.head_dim).transpose(1, 2)
        scores = torch.matmul(q, k.transpose(-1, -2)) * self.scale
        if attn_bias is not None:
            scores = scores + attn_bias
        attn = torch.softmax(scores, dim=-1)
        if keep_attention:
            self.last_attention = attn.detach()
        self.last_seq_len = seq
        attn = self.dropout(attn)
        ctx = torch.matmul(attn, v)  # (B, H, L, Dh)
        ctx = ctx.transpose(1, 2).reshape(bsz, seq, self.model_dim)
        return self.out_proj(ctx)


class FeedForward(nn.Module):
    def __init__(self, model_dim: int, ff_dim: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(model_dim, ff_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(ff_dim, model_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.dropout(self.act(self.fc1(x))))


class TransformerEncoderLayer(nn.Module):
    """One encoder layer; post-norm (BERT style) or pre-norm (ViT style)."""

    def __init__(
        self,
        model_dim: int,
        num_heads: int,
        ff_dim: int,
        dropout: float = 0.1,
        norm_first: bool = False,
    ):
        super().__init__()
        self.norm_first = norm_first
        self.attn = MultiHeadSelfAttention(model_dim, num_heads, dropout)
        self.ff = FeedForward(model_dim, ff_dim, dropout)
        self.norm1 = nn.LayerNorm(model_dim)
        self.norm2 = nn.LayerNorm(model_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(
        self,
        x: torch.Tensor,
        attn_bias: torch.Tensor | None = None,
        keep_attention: bool = False,
    ) -> torch.Tensor:
        if self.norm_first:
            x = x + self.dropout(self.attn(self.norm1(x), attn_bias, keep_attention))
            x = x + self.dropout(self.ff(self.norm2(x)))
        else:
            x = self.norm1(x + self.dropout(self.attn(x, attn_bias, keep_attention)))
            x = self.norm2(x + self.dropout(self.ff(x)))
        return x


def init_transformer_weights(module: nn.Module, std: float = 0.02) -> None:
    """BERT-style initialization: trunc-free normal for linear/embedding."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.normal_(m.weight, mean=0.0, std=std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Embedding):
            nn.init.normal_(m.weight, mean=0.0, std=std)
        elif isinstance(m, nn.LayerNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
