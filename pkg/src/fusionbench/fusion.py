"""The three fused architectures plus their shared attention block and head.

Strategy wiring:

* late          -- both backbones at full depth, pooled outputs concatenated
                   into the head; backbone parameters frozen.
* intermediate  -- both backbones truncated to max(taps); at each tap the
                   text and vision features are projected to fusion_dim and
                   joined by concatenation. The first two joins pass through
                   a learned linear map; the last tap joins token sequences
                   through one attention block, mean-pooled per modality
                   segment. The three 2*fusion_dim joins feed the head.
* early         -- both backbones truncated to cut_layer; the vision feature
                   map becomes a token sequence projected to the text width,
                   concatenated with the text tokens, run through
                   num_attention_blocks attention blocks, mean-pooled, and
                   fed to the same head.

Every model takes the identical (tokens, mask, image) batch, so dataset
code is strategy-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn as nn

from .backbones.cnn import CnnBackbone
from .backbones.layers import MultiHeadSelfAttention, additive_mask, init_transformer_weights
from .backbones.text import TextEncoder
from .backbones.vit import VitBackbone
from .errors import ConfigurationError, ShapeError

STRATEGIES = ("late", "intermediate", "early")

DEFAULT_TAPS = (4, 7, 8)
DEFAULT_CUT_LAYER = 6
DEFAULT_ATTENTION_BLOCKS = 4


@dataclass(frozen=True)
class HeadConfig:
    hidden_dim: int = 64
    dropout: float = 0.1
    num_classes: int = 2

    def validate(self) -> "HeadConfig":
        if self.hidden_dim <= 0:
            raise ConfigurationError("head: hidden_dim must be a positive integer")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("head: dropout must be in [0, 1)")
        if self.num_classes != 2:
            raise ConfigurationError("head: num_classes is fixed at 2")
        return self


@dataclass(frozen=True)
class AttentionBlockConfig:
    model_dim: int
    num_heads: int = 4
    ff_expansion: int = 2

    def validate(self) -> "AttentionBlockConfig":
        if self.num_heads <= 0 or self.model_dim <= 0 or self.ff_expansion <= 0:
            raise ConfigurationError("attention block: all dimensions must be positive integers")
        if self.model_dim % self.num_heads != 0:
            raise ConfigurationError(
                "attention block: model_dim mod num_heads = 0 violated "
                f"({self.model_dim} % {self.num_heads} != 0)"
            )
        return self


@dataclass(frozen=True)
class FusionSpec:
    strategy: str = "late"
    taps: Tuple[int, ...] = DEFAULT_TAPS
    cut_layer: int = DEFAULT_CUT_LAYER
    num_attention_blocks: int = DEFAULT_ATTENTION_BLOCKS
    fusion_dim: int = 64
    attention_heads: int = 4
    head: HeadConfig = field(default_factory=HeadConfig)

    def validate(self, text_depth: Optional[int] = None, vision_depth: Optional[int] = None) -> "FusionSpec":
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"fusion: unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        # strategy-irrelevant fields are ignored by the builders but still validated
        if len(self.taps) == 0 or any(t <= 0 for t in self.taps):
            raise ConfigurationError("fusion: taps must be positive layer indices")
        if list(self.taps) != sorted(set(self.taps)):
            raise ConfigurationError("fusion: taps must be sorted strictly ascending")
        if self.cut_layer <= 0:
            raise ConfigurationError("fusion: cut_layer must be a positive layer index")
        if self.num_attention_blocks < 1:
            raise ConfigurationError("fusion: num_attention_blocks must be >= 1")
        if self.fusion_dim <= 0:
            raise ConfigurationError("fusion: fusion_dim must be a positive integer")
        self.head.validate()
        if text_depth is not None and vision_depth is not None:
            if self.strategy == "intermediate":
                used = max(self.taps)
                if used > text_depth or used > vision_depth:
                    raise ConfigurationError(
                        f"fusion: tap {used} exceeds available depth "
                        f"(text {text_depth}, vision {vision_depth})"
                    )
            if self.strategy == "early":
                if self.cut_layer > text_depth or self.cut_layer > vision_depth:
                    raise ConfigurationError(
                        f"fusion: cut_layer {self.cut_layer} exceeds available depth "
                        f"(text {text_depth}, vision {vision_depth})"
                    )
        return self


class AttentionBlock(nn.Module):
    """Residual multi-head self-attention + residual position-wise FFN,
    each followed by layer normalization. Output shape equals input shape."""

    def __init__(self, cfg: AttentionBlockConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.attn = MultiHeadSelfAttention(cfg.model_dim, cfg.num_heads)
        self.norm1 = nn.LayerNorm(cfg.model_dim)
        ff_dim = cfg.model_dim * cfg.ff_expansion
        self.fc1 = nn.Linear(cfg.model_dim, ff_dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(ff_dim, cfg.model_dim)
        self.norm2 = nn.LayerNorm(cfg.model_dim)
        init_transformer_weights(self)

    def forward(
        self,
        x: torch.Tensor,
        attn_bias: torch.Tensor | None = None,
        keep_attention: bool = False,
    ) -> torch.Tensor:
        if x.shape[-1] != self.cfg.model_dim:
            raise ShapeError(
                f"attention block expects width {self.cfg.model_dim}, got {x.shape[-1]}"
            )
        x = self.norm1(x + self.attn(x, attn_bias, keep_attention))
        x = self.norm2(x + self.fc2(self.act(self.fc1(x))))
        return x


class ClassificationHead(nn.Module):
    """Shared two-layer decision head; dropout active only in training."""

    def __init__(self, in_dim: int, cfg: HeadConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        self.fc1 = nn.Linear(in_dim, cfg.hidden_dim)
        self.act = nn.ReLU()
        self.dropout = nn.Dropout(cfg.dropout)
        self.fc2 = nn.Linear(cfg.hidden_dim, cfg.num_classes)
        init_transformer_weights(self)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.in_dim:
            raise ShapeError(f"head expects input width {self.in_dim}, got {z.shape[-1]}")
        return self.fc2(self.dropout(self.act(self.fc1(z))))


def decide(logits: torch.Tensor) -> torch.Tensor:
    """Binary decision from 2 logits; exact ties resolve to class 0."""
    if logits.shape[-1] != 2:
        raise ShapeError(f"decide expects 2 logits, got {logits.shape[-1]}")
    return (logits[..., 1] > logits[..., 0]).long()


def _pooled_vision(vision: nn.Module, feature: torch.Tensor) -> torch.Tensor:
    """Per-tap vision pooling: GAP for CNN maps, class token for ViT."""
    if feature.dim() == 4:
        return feature.mean(dim=(2, 3))
    return feature[:, 0]


def _vision_tokens(feature: torch.Tensor) -> torch.Tensor:
    """Feature map (B,C,H,W) -> (B, H*W, C); token sequences pass through."""
    if feature.dim() == 4:
        return feature.flatten(2).transpose(1, 2)
    return feature


class FusedModel(nn.Module):
    """Base for the three strategies: owns backbones, head, freeze set."""

    strategy: str = "base"

    def __init__(self, text_backbone: TextEncoder, vision_backbone: nn.Module, spec: FusionSpec):
        super().__init__()
        self.spec = spec
        self.text_backbone = text_backbone
        self.vision_backbone = vision_backbone
        self.frozen_set: set[str] = set()

    # -- parameter groups -------------------------------------------------
    def parameter_groups(self) -> Dict[str, List[str]]:
        """Group id -> parameter names (registry view)."""
        groups: Dict[str, List[str]] = {
            "text_backbone": [],
            "vision_backbone": [],
            "fusion": [],
            "head": [],
        }
        for name, _ in self.named_parameters():
            groups[self.group_of(name)].append(name)
        return {k: v for k, v in groups.items() if v}

    def group_of(self, param_name: str) -> str:
        if param_name.startswith("text_backbone."):
            return "text_backbone"
        if param_name.startswith("vision_backbone."):
            return "vision_backbone"
        if param_name.startswith("head."):
            return "head"
        return "fusion"

    def group_module(self, group: str) -> nn.Module:
        if group == "text_backbone":
            return self.text_backbone
        if group == "vision_backbone":
            return self.vision_backbone
        if group == "head":
            return self.head
        return self

    def train(self, mode: bool = True) -> "FusedModel":
        super().train(mode)
        # frozen groups keep evaluation semantics (no dropout, fixed BN stats)
        for group in self.frozen_set:
            if group in ("text_backbone", "vision_backbone", "head"):
                self.group_module(group).eval()
        return self

    # -- probe inputs ------------------------------------------------------
    def input_geometry(self) -> Dict[str, Tuple[int, ...]]:
        text_cfg = self.text_backbone.cfg
        vis_cfg = self.vision_backbone.cfg
        return {
            "tokens": (text_cfg.max_seq_len,),
            "mask": (text_cfg.max_seq_len,),
            "image": (3, vis_cfg.input_resolution, vis_cfg.input_resolution),
        }

    def probe_batch(self, batch_size: int = 1, seed: int = 0) -> Dict[str, torch.Tensor]:
        g = torch.Generator().manual_seed(seed)
        geo = self.input_geometry()
        seq = geo["tokens"][0]
        tokens = torch.randint(0, self.text_backbone.cfg.vocab_size, (batch_size, seq), generator=g)
        lengths = torch.randint(seq // 2, seq + 1, (batch_size,), generator=g)
        mask = (torch.arange(seq).unsqueeze(0) < lengths.unsqueeze(1)).float()
        image = torch.randn((batch_size,) + geo["image"], generator=g)
        return {"tokens": tokens, "mask": mask, "image": image}

    def forward(self, tokens: torch.Tensor, mask: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def _run_text(self, tokens, mask):
        if "text_backbone" in self.frozen_set and self.training:
            with torch.no_grad():
                return self.text_backbone(tokens, mask)
        return self.text_backbone(tokens, mask)

    def _run_vision(self, image):
        if "vision_backbone" in self.frozen_set and self.training:
            with torch.no_grad():
                return self.vision_backbone(image)
        return self.vision_backbone(image)


class LateFusionModel(FusedModel):
    strategy = "late"

    def __init__(self, text_backbone: TextEncoder, vision_backbone: nn.Module, spec: FusionSpec):
        super().__init__(text_backbone, vision_backbone, spec)
        self.head_in_dim = text_backbone.feature_width + vision_backbone.feature_width
        self.head = ClassificationHead(self.head_in_dim, spec.head)
        self.frozen_set = {"text_backbone", "vision_backbone"}
        for group in self.frozen_set:
            for p in self.group_module(group).parameters():
                p.requires_grad_(False)

    def forward(self, tokens, mask, image):
        if tokens.shape[0] != image.shape[0]:
            raise ShapeError(
                f"mismatched batch sizes between modalities: text {tokens.shape[0]}, "
                f"image {image.shape[0]}"
            )
        text_out = self._run_text(tokens, mask)
        vision_out = self._run_vision(image)
        fused = torch.cat([text_out.final_pooled, vision_out.final_pooled], dim=1)
        return self.head(fused)


class IntermediateFusionModel(FusedModel):
    strategy = "intermediate"

    def __init__(self, text_backbone: TextEncoder, vision_backbone: nn.Module, spec: FusionSpec):
        super().__init__(text_backbone, vision_backbone, spec)
        self.taps = tuple(spec.taps)
        used_depth = max(self.taps)
        text_backbone.truncate_(used_depth)
        vision_backbone.truncate_(used_depth)
        f = spec.fusion_dim
        d_text = text_backbone.feature_width

        def vision_width(tap: int) -> int:
            if isinstance(vision_backbone, CnnBackbone):
                return vision_backbone.channels_at(tap)
            return vision_backbone.feature_width

        self.tap_text_proj = nn.ModuleList(
            nn.Linear(d_text, f) for _ in self.taps[:-1]
        )
        self.tap_vision_proj = nn.ModuleList(
            nn.Linear(vision_width(t), f) for t in self.taps[:-1]
        )
        # "learned linear map" over each early join
        self.tap_join = nn.ModuleList(
            nn.Linear(2 * f, 2 * f) for _ in self.taps[:-1]
        )
        # final tap: joint token sequence through one attention block
        self.seq_text_proj = nn.Linear(d_text, f)
        self.seq_vision_proj = nn.Linear(vision_width(self.taps[-1]), f)
        self.attention_block = AttentionBlock(
            AttentionBlockConfig(model_dim=f, num_heads=spec.attention_heads)
        )
        for m in (self.tap_text_proj, self.tap_vision_proj, self.tap_join,
                  self.seq_text_proj, self.seq_vision_proj):
            init_transformer_weights(m)
        self.head_in_dim = len(self.taps) * 2 * f
        self.head = ClassificationHead(self.head_in_dim, spec.head)

    def forward(self, tokens, mask, image):
        if tokens.shape[0] != image.shape[0]:
            raise ShapeError(
                f"mismatched batch sizes between modalities: text {tokens.shape[0]}, "
                f"image {image.shape[0]}"
            )
        text_out = self._run_text(tokens, mask)
        vision_out = self._run_vision(image)
        joins = []
        for i, tap in enumerate(self.taps[:-1]):
            t_vec = self.tap_text_proj[i](text_out.layer(tap)[:, 0])
            v_vec = self.tap_vision_proj[i](_pooled_vision(self.vision_backbone, vision_out.layer(tap)))
            joins.append(self.tap_join[i](torch.cat([t_vec, v_vec], dim=1)))
        # last tap: short joint sequence through the attention block
        last = self.taps[-1]
        t_tokens = self.seq_text_proj(text_out.layer(last))
        v_tokens = self.seq_vision_proj(_vision_tokens(vision_out.layer(last)))
        seq = torch.cat([t_tokens, v_tokens], dim=1)
        n_text = t_tokens.shape[1]
        joint_mask = torch.cat(
            [mask.float(), torch.ones(seq.shape[0], v_tokens.shape[1], dtype=seq.dtype, device=seq.device)],
            dim=1,
        )
        attended = self.attention_block(seq, additive_mask(joint_mask))
        joins.append(
            torch.cat([attended[:, :n_text].mean(dim=1), attended[:, n_text:].mean(dim=1)], dim=1)
        )
        return self.head(torch.cat(joins, dim=1))


class EarlyFusionModel(FusedModel):
    strategy = "early"

    def __init__(self, text_backbone: TextEncoder, vision_backbone: nn.Module, spec: FusionSpec):
        super().__init__(text_backbone, vision_backbone, spec)
        self.cut_layer = spec.cut_layer
        text_backbone.truncate_(self.cut_layer)
        vision_backbone.truncate_(self.cut_layer)
        d_text = text_backbone.feature_width
        if isinstance(vision_backbone, CnnBackbone):
            vis_width = vision_backbone.channels_at(self.cut_layer)
            side = vision_backbone.cfg.spatial_size(self.cut_layer)
            self.vision_token_count = side * side
        else:
            vis_width = vision_backbone.feature_width
            self.vision_token_count = vision_backbone.cfg.seq_len
        self.vision_token_proj = nn.Linear(vis_width, d_text)
        init_transformer_weights(self.vision_token_proj)
        self.blocks = nn.ModuleList(
            AttentionBlock(AttentionBlockConfig(model_dim=d_text, num_heads=spec.attention_heads))
            for _ in range(spec.num_attention_blocks)
        )
        self.head_in_dim = d_text
        self.head = ClassificationHead(self.head_in_dim, spec.head)
        self.last_joint_shape: Tuple[int, ...] | None = None

    def forward(self, tokens, mask, image):
        if tokens.shape[0] != image.shape[0]:
            raise ShapeError(
                f"mismatched batch sizes between modalities: text {tokens.shape[0]}, "
                f"image {image.shape[0]}"
            )
        text_out = self._run_text(tokens, mask)
        vision_out = self._run_vision(image)
        t_tokens = text_out.layer(self.cut_layer)
        v_tokens = self.vision_token_proj(_vision_tokens(vision_out.layer(self.cut_layer)))
        seq = torch.cat([t_tokens, v_tokens], dim=1)
        self.last_joint_shape = tuple(seq.shape)
        joint_mask = torch.cat(
            [mask.float(), torch.ones(seq.shape[0], v_tokens.shape[1], dtype=seq.dtype, device=seq.device)],
            dim=1,
        )
        bias = additive_mask(joint_mask)
        for block in self.blocks:
            seq = block(seq, bias)
        return self.head(seq.mean(dim=1))


class UnimodalClassifier(nn.Module):
    """A single backbone plus its own head; accepts the same batches as the
    fused models so evaluation code never branches."""

    def __init__(self, backbone: nn.Module, head_cfg: HeadConfig = HeadConfig()):
        super().__init__()
        self.backbone = backbone
        self.modality = "T" if isinstance(backbone, TextEncoder) else "V"
        self.strategy = "text_base" if self.modality == "T" else "vision_base"
        self.head_in_dim = backbone.feature_width
        self.head = ClassificationHead(self.head_in_dim, head_cfg)
        self.frozen_set: set[str] = set()

    def forward(self, tokens, mask, image):
        if self.modality == "T":
            pooled = self.backbone(tokens, mask).final_pooled
        else:
            pooled = self.backbone(image).final_pooled
        return self.head(pooled)

    # mirror the FusedModel group API so training treats both uniformly
    def parameter_groups(self) -> Dict[str, List[str]]:
        groups: Dict[str, List[str]] = {"backbone": [], "head": []}
        for name, _ in self.named_parameters():
            groups[self.group_of(name)].append(name)
        return {k: v for k, v in groups.items() if v}

    def group_of(self, param_name: str) -> str:
        return "head" if param_name.startswith("head.") else "backbone"

    def group_module(self, group: str) -> nn.Module:
        return self.head if group == "head" else self.backbone

    def train(self, mode: bool = True) -> "UnimodalClassifier":
        super().train(mode)
        for group in self.frozen_set:
            self.group_module(group).eval()
        return self


def build_late_fusion(text: TextEncoder, vision: nn.Module, spec: FusionSpec) -> LateFusionModel:
    spec.validate()
    return LateFusionModel(text, vision, spec)


def build_intermediate_fusion(text: TextEncoder, vision: nn.Module, spec: FusionSpec) -> IntermediateFusionModel:
    spec.validate(text.depth, vision.depth)
    if isinstance(vision, VitBackbone) and vision.depth != text.depth:
        raise ConfigurationError(
            "fusion: intermediate fusion with a ViT requires equal encoder depths "
            f"(text {text.depth}, vit {vision.depth}); taps index the same layers"
        )
    return IntermediateFusionModel(text, vision, spec)


def build_early_fusion(text: TextEncoder, vision: nn.Module, spec: FusionSpec) -> EarlyFusionModel:
    spec.validate(text.depth, vision.depth)
    return EarlyFusionModel(text, vision, spec)


def build_fusion(text: TextEncoder, vision: nn.Module, spec: FusionSpec) -> FusedModel:
    builders = {
        "late": build_late_fusion,
        "intermediate": build_intermediate_fusion,
        "early": build_early_fusion,
    }
    if spec.strategy not in builders:
        raise ConfigurationError(f"fusion: unknown strategy {spec.strategy!r}")
    return builders[spec.strategy](text, vision, spec)
