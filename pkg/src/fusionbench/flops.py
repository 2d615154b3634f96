"""Analytic forward-cost accounting.

Counts multiply-accumulates (MACs) of matmuls, convolutions and attention
score/context products at batch size 1; element-wise ops, normalizations
and embedding lookups count zero. Parameter counts come straight from the
registry. The counter is additive over model composition: the per-group
breakdown sums exactly to the total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import torch
import torch.nn as nn

from .backbones.layers import MultiHeadSelfAttention
from .errors import UnknownLayerError

# parameter-free / zero-MAC module kinds the counter recognizes
_ZERO_MAC_KINDS = (
    nn.Embedding,
    nn.LayerNorm,
    nn.BatchNorm2d,
    nn.Dropout,
    nn.ReLU,
    nn.ReLU6,
    nn.GELU,
    nn.Tanh,
    nn.Softmax,
    nn.Identity,
    nn.Flatten,
)


@dataclass
class FlopReport:
    flops: int  # forward MACs at batch 1
    params: int
    by_group: Dict[str, int] = field(default_factory=dict)

    def __iter__(self):
        # allow tuple unpacking: flops, params = count_flops_params(...)
        yield self.flops
        yield self.params


def _linear_macs(module: nn.Linear, out: torch.Tensor) -> int:
    return out.numel() * module.in_features


def _conv_macs(module: nn.Conv2d, out: torch.Tensor) -> int:
    k = module.kernel_size[0] * module.kernel_size[1]
    per_out = (module.in_channels // module.groups) * k
    return out.numel() * per_out


def _attention_macs(module: MultiHeadSelfAttention, out: torch.Tensor) -> int:
    # scores q @ k^T plus context attn @ v: each batch*L*L*model_dim MACs
    bsz, seq = out.shape[0], out.shape[1]
    return 2 * bsz * seq * seq * module.model_dim


def count_flops_params(model: nn.Module, batch: Optional[dict] = None) -> FlopReport:
    """Probe-forward the model at batch 1 and account each layer analytically.

    Raises UnknownLayerError for a parameterized leaf module the counter has
    no rule for.
    """
    if batch is None:
        batch = model.probe_batch(batch_size=1, seed=0)
    by_group: Dict[str, int] = {}
    group_of = getattr(model, "group_of", lambda name: "model")
    handles = []
    counted_prefixes: set[str] = set()

    def add(name: str, macs: int) -> None:
        group = group_of(name + ".w") if name else "model"
        by_group[group] = by_group.get(group, 0) + macs

    def make_hook(name: str, kind: str):
        def hook(module, inputs, output):
            if kind == "linear":
                add(name, _linear_macs(module, output))
            elif kind == "conv":
                add(name, _conv_macs(module, output))
            elif kind == "attention":
                add(name, _attention_macs(module, output))
        return hook

    for name, module in model.named_modules():
        if isinstance(module, MultiHeadSelfAttention):
            handles.append(module.register_forward_hook(make_hook(name, "attention")))
        elif isinstance(module, nn.Linear):
            handles.append(module.register_forward_hook(make_hook(name, "linear")))
            counted_prefixes.add(name)
        elif isinstance(module, nn.Conv2d):
            handles.append(module.register_forward_hook(make_hook(name, "conv")))
            counted_prefixes.add(name)
        elif isinstance(module, _ZERO_MAC_KINDS):
            counted_prefixes.add(name)
        elif len(list(module.children())) == 0 and any(True for _ in module.parameters(recurse=False)):
            raise UnknownLayerError(
                f"no FLOP rule for layer {name or '<root>'} of kind {type(module).__name__}"
            )

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            model(batch["tokens"], batch["mask"], batch["image"])
    finally:
        for h in handles:
            h.remove()
        if was_training:
            model.train()

    # parameters declared directly on unhooked modules (cls tokens, pos embeddings)
    params = sum(p.numel() for p in model.parameters())
    total = sum(by_group.values())
    return FlopReport(flops=total, params=params, by_group=by_group)
