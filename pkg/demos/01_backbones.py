"""Tour of the three unimodal backbones and their per-layer taps.

Every backbone maps a batch to LayerOutputs: an ordered list of per-layer
feature blocks (1-based indices, matching tap notation) plus the pooled
feature its classification pathway would consume.
"""

import torch

from fusionbench import (
    CnnBackboneConfig,
    TextEncoderConfig,
    VitBackboneConfig,
    build_cnn_backbone,
    build_text_encoder,
    build_vit_backbone,
)

torch.manual_seed(0)

print("== BERT-style text encoder (toy: 8 layers, dim 64) ==")
text_cfg = TextEncoderConfig()
text = build_text_encoder(text_cfg).eval()
tokens = torch.randint(0, text_cfg.vocab_size, (2, text_cfg.max_seq_len))
mask = torch.ones(2, text_cfg.max_seq_len)
with torch.no_grad():
    out = text(tokens, mask, keep_attention=True)
print(f"depth {out.depth}; layer 4 block {tuple(out.layer(4).shape)}; "
      f"pooled {tuple(out.final_pooled.shape)} (first-token transform)")
rows = text.layers[0].attn.last_attention.sum(-1)
print(f"attention rows sum to 1: max deviation {float((rows - 1).abs().max()):.2e}")
print(f"parameters: {sum(p.numel() for p in text.parameters()):,}")

print("\n== MobileNetV2-style CNN (toy: 16 bottlenecks, width 0.25, 64 px) ==")
cnn_cfg = CnnBackboneConfig()
cnn = build_cnn_backbone(cnn_cfg).eval()
with torch.no_grad():
    out = cnn(torch.randn(2, 3, 64, 64))
for tap in (4, 6, 8, 16):
    print(f"bottleneck {tap:2d}: {tuple(out.layer(tap).shape)} "
          f"(spatial {cnn_cfg.spatial_size(tap)}x{cnn_cfg.spatial_size(tap)})")
print(f"pooled (global average): {tuple(out.final_pooled.shape)} "
      f"-> final channels {cnn.feature_width}")

print("\n== ViT-style encoder (toy: 8 layers, patch 8, 64 px) ==")
vit = build_vit_backbone(VitBackboneConfig()).eval()
with torch.no_grad():
    out = vit(torch.randn(2, 3, 64, 64))
print(f"sequence per layer: {tuple(out.layer(1).shape)} "
      f"(64 patches + class token); pooled = class token {tuple(out.final_pooled.shape)}")

print("\nReference-scale configs (pretrained-checkpoint geometry, random init here):")
from fusionbench.backbones.text import reference_text_config
from fusionbench.backbones.cnn import reference_cnn_config
from fusionbench.backbones.vit import reference_vit_config

print(" text:", reference_text_config())
print(" cnn: ", reference_cnn_config())
print(" vit: ", reference_vit_config())
