"""Attention-block-count ablation for the early fusion model."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import torch.nn as nn

from .data import SampleSet
from .errors import ValidationError
from .training import TrainRecipe, evaluate_accuracy, train


@dataclass
class AblationResult:
    rows: List[Tuple[int, float]] = field(default_factory=list)  # (blocks, accuracy)
    errors: List[str] = field(default_factory=list)

    def selected(self) -> Optional[int]:
        """Highest accuracy; ties broken by fewer blocks."""
        if not self.rows:
            return None
        return min(self.rows, key=lambda row: (-row[1], row[0]))[0]

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["blocks,accuracy"] + [f"{b},{acc:.6f}" for b, acc in self.rows]
        path.write_text("\n".join(lines) + "\n")


def run_ablation(
    build_model: Callable[[int], nn.Module],
    train_set: SampleSet,
    eval_set: SampleSet,
    recipe: TrainRecipe,
    block_counts: Sequence[int] = (2, 4, 6, 8),
    log=None,
) -> AblationResult:
    """Train one early-fusion model per block count with identical
    seeds/recipes and record eval accuracy per cell. A failing cell is
    reported in `errors` and the grid continues."""
    if not block_counts:
        raise ValidationError("run_ablation: block_counts must be nonempty")
    result = AblationResult()
    for blocks in block_counts:
        try:
            model = build_model(int(blocks))
            train(model, train_set, recipe)
            acc = evaluate_accuracy(model, eval_set)
            result.rows.append((int(blocks), acc))
            if log is not None:
                log(f"ablation blocks={blocks} accuracy={acc:.4f}")
        except Exception as exc:  # partial table plus error list
            result.errors.append(f"blocks={blocks}: {type(exc).__name__}: {exc}")
    return result
