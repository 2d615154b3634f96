"""Binary accuracy and F1 over negative / non-negative decisions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Label
from .errors import ValidationError


@dataclass
class MetricsRecord:
    model_name: str
    modality: str  # "V", "T" or "T+V"
    binary_accuracy: float
    f1: Optional[float] = None
    vision: Optional[str] = None  # "cnn" | "vit" for fused/vision models

    def validate(self) -> "MetricsRecord":
        if not 0.0 <= self.binary_accuracy <= 1.0:
            raise ValidationError("binary_accuracy must be a fraction in [0, 1]")
        if self.f1 is not None and not 0.0 <= self.f1 <= 1.0:
            raise ValidationError("f1 must be a fraction in [0, 1]")
        if self.modality not in ("V", "T", "T+V"):
            raise ValidationError(f"modality must be V, T or T+V, got {self.modality!r}")
        return self


def _paired(preds: Sequence, labels: Sequence):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValidationError(
            f"preds and labels must be equal-length 1-d sequences, got {preds.shape} vs {labels.shape}"
        )
    if len(preds) == 0:
        raise ValidationError("need at least one prediction")
    return preds, labels


def binary_accuracy(preds: Sequence, labels: Sequence) -> float:
    preds, labels = _paired(preds, labels)
    return float(np.mean(preds == labels))


def f1_score(preds: Sequence, labels: Sequence, positive_class=Label.NON_NEGATIVE) -> float:
    """Harmonic mean of precision and recall; 0 when precision+recall = 0."""
    preds, labels = _paired(preds, labels)
    positive = int(positive_class)
    tp = int(np.sum((preds == positive) & (labels == positive)))
    fp = int(np.sum((preds == positive) & (labels != positive)))
    fn = int(np.sum((preds != positive) & (labels == positive)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)
