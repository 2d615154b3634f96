"""Shared backbone output container."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import torch


@dataclass
class LayerOutputs:
    """Per-layer feature blocks plus the backbone's pooled feature vector.

    per_layer[i] is the output of layer i+1 (layer indices are 1-based in
    configs and taps); every block has the batch dimension first.
    final_pooled is the output of the backbone's pooling function.
    """

    per_layer: List[torch.Tensor]
    final_pooled: torch.Tensor

    @property
    def depth(self) -> int:
        return len(self.per_layer)

    def layer(self, index: int) -> torch.Tensor:
        """1-based layer access, matching tap indices."""
        if not 1 <= index <= len(self.per_layer):
            raise IndexError(f"layer index {index} outside 1..{len(self.per_layer)}")
        return self.per_layer[index - 1]
