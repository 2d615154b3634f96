"""Training recipes, the deterministic training loop, freeze control and
checkpointing.

Weight decay is coupled (applied as part of the gradient), matching the
classic SGD-with-momentum and Adam formulations:

    g' = g + wd * p;  v = mu * v + g';  p <- p - lr * v

which is exactly what torch.optim.SGD/Adam implement. No learning-rate
schedule; epochs are fixed per stage.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import SampleSet
from .determinism import seed_everything
from .errors import ConfigurationError, TrainingDiverged, ValidationError
from .fusion import decide

STAGES = ("cnn_base", "text_base", "late", "intermediate", "early")


@dataclass(frozen=True)
class TrainRecipe:
    optimizer: str = "sgd_momentum"  # or "adam"
    lr: float = 1e-4
    momentum: float = 0.9
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    freeze: frozenset = frozenset()
    seed: int = 0

    def validate(self) -> "TrainRecipe":
        if self.optimizer not in ("sgd_momentum", "adam"):
            raise ConfigurationError(f"recipe: unknown optimizer {self.optimizer!r}")
        if self.batch_size < 1:
            raise ConfigurationError("recipe: batch_size >= 1 required")
        if self.epochs < 1:
            raise ConfigurationError("recipe: epochs >= 1 required")
        if self.lr < 0 or self.weight_decay < 0:
            raise ConfigurationError("recipe: lr and weight_decay must be non-negative")
        return self


def recipe_for(stage: str, seed: int = 0) -> TrainRecipe:
    """The per-stage training recipes.

    Base-model fine-tuning: CNN via SGD(1e-4, momentum 0.9, wd 1e-4) for
    150 epochs; text via Adam(1e-5, betas (0.9, 0.999), eps 1e-8) for 12.
    Late fusion trains its head for 100 epochs at lr 1e-3 with both
    backbones frozen. Intermediate/early train end to end with
    SGD(1e-4, momentum 0.9, wd 1e-4); their epoch counts are not pinned by
    the reference recipes, so a desk-scale default of 50 is used. Batch
    size is 32 for every stage.
    """
    if stage == "cnn_base":
        return TrainRecipe(optimizer="sgd_momentum", lr=1e-4, momentum=0.9,
                           weight_decay=1e-4, epochs=150, batch_size=32, seed=seed)
    if stage == "text_base":
        return TrainRecipe(optimizer="adam", lr=1e-5, betas=(0.9, 0.999), epsilon=1e-8,
                           weight_decay=0.0, epochs=12, batch_size=32, seed=seed)
    if stage == "late":
        return TrainRecipe(optimizer="sgd_momentum", lr=1e-3, momentum=0.9,
                           weight_decay=1e-4, epochs=100, batch_size=32,
                           freeze=frozenset({"text_backbone", "vision_backbone"}), seed=seed)
    if stage in ("intermediate", "early"):
        return TrainRecipe(optimizer="sgd_momentum", lr=1e-4, momentum=0.9,
                           weight_decay=1e-4, epochs=50, batch_size=32, seed=seed)
    raise ConfigurationError(f"recipe: unknown stage {stage!r}; expected one of {STAGES}")


# ---------------------------------------------------------------------------
# freeze control

def _check_groups(model: nn.Module, groups: Iterable[str]) -> List[str]:
    valid = list(model.parameter_groups().keys())
    groups = list(groups)
    unknown = [g for g in groups if g not in valid]
    if unknown:
        raise ValidationError(
            f"unknown parameter group(s) {unknown}; valid ids: {valid}"
        )
    return groups


def freeze(model: nn.Module, groups: Iterable[str]) -> None:
    """Exclude groups from gradient updates and optimizer state."""
    for group in _check_groups(model, groups):
        for p in model.group_module(group).parameters():
            p.requires_grad_(False)
        model.frozen_set.add(group)
    model.train(model.training)  # refresh frozen-module eval state


def unfreeze(model: nn.Module, groups: Iterable[str]) -> None:
    for group in _check_groups(model, groups):
        for p in model.group_module(group).parameters():
            p.requires_grad_(True)
        model.frozen_set.discard(group)
    model.train(model.training)


# ---------------------------------------------------------------------------
# history

@dataclass
class TrainHistory:
    train_loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    val_acc: List[float] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)

    def to_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,train_loss,train_acc,val_acc,seconds"]
        for i in range(len(self.train_loss)):
            val = f"{self.val_acc[i]:.6f}" if i < len(self.val_acc) else ""
            lines.append(
                f"{i + 1},{self.train_loss[i]:.8f},{self.train_acc[i]:.6f},{val},{self.seconds[i]:.4f}"
            )
        path.write_text("\n".join(lines) + "\n")


@dataclass
class TrainResult:
    history: TrainHistory
    checkpoint_path: Optional[Path] = None
    best_val_path: Optional[Path] = None


# ---------------------------------------------------------------------------
# checkpoints: single-file versioned container (npz with a JSON manifest)

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(
    path: Path,
    model: nn.Module,
    manifest: Optional[dict] = None,
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload: Dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        payload[f"state::{name}"] = tensor.detach().cpu().numpy()
    if optimizer is not None:
        opt_state = optimizer.state_dict()
        payload["opt::json"] = np.frombuffer(
            json.dumps(_optimizer_meta(opt_state)).encode(), dtype=np.uint8
        )
        for pid, entry in opt_state["state"].items():
            for key, value in entry.items():
                if isinstance(value, torch.Tensor):
                    payload[f"opt::{pid}::{key}"] = value.detach().cpu().numpy()
                else:
                    payload[f"opt::{pid}::{key}"] = np.asarray(value)
    meta = dict(manifest or {})
    meta.setdefault("format_version", CHECKPOINT_FORMAT_VERSION)
    payload["manifest::json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)
    return path


def _optimizer_meta(opt_state: dict) -> dict:
    return {"param_groups": opt_state["param_groups"], "state_keys": sorted(opt_state["state"].keys())}


def load_checkpoint(path: Path) -> Tuple[Dict[str, torch.Tensor], dict]:
    """Returns (state_dict, manifest)."""
    with np.load(Path(path), allow_pickle=False) as z:
        manifest = json.loads(bytes(z["manifest::json"]).decode())
        state = {
            key[len("state::"):]: torch.from_numpy(np.array(z[key]))
            for key in z.files
            if key.startswith("state::")
        }
    return state, manifest


def load_into(model: nn.Module, path: Path) -> dict:
    state, manifest = load_checkpoint(path)
    model.load_state_dict(state)
    return manifest


# ---------------------------------------------------------------------------
# the loop

def _build_optimizer(model: nn.Module, recipe: TrainRecipe) -> torch.optim.Optimizer:
    trainable = [p for p in model.parameters() if p.requires_grad]
    if not trainable:
        # keep a valid optimizer even when everything is frozen
        trainable = [nn.Parameter(torch.zeros(1))]
    if recipe.optimizer == "sgd_momentum":
        return torch.optim.SGD(
            trainable, lr=recipe.lr, momentum=recipe.momentum, weight_decay=recipe.weight_decay
        )
    return torch.optim.Adam(
        trainable, lr=recipe.lr, betas=recipe.betas, eps=recipe.epsilon,
        weight_decay=recipe.weight_decay,
    )


def _tensors(data: SampleSet) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    return (
        torch.from_numpy(data.tokens),
        torch.from_numpy(data.mask),
        torch.from_numpy(data.images),
        torch.from_numpy(data.labels),
    )


@torch.no_grad()
def evaluate_accuracy(model: nn.Module, data: SampleSet, batch_size: int = 64) -> float:
    tokens, mask, images, labels = _tensors(data)
    was_training = model.training
    model.eval()
    correct = 0
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        logits = model(tokens[sl], mask[sl], images[sl])
        correct += int((decide(logits) == labels[sl]).sum())
    if was_training:
        model.train()
    return correct / len(data)


def train(
    model: nn.Module,
    train_set: SampleSet,
    recipe: TrainRecipe,
    val_set: Optional[SampleSet] = None,
    checkpoint_dir: Optional[Path] = None,
    checkpoint_manifest: Optional[dict] = None,
    log=None,
) -> TrainResult:
    """Runs epochs * ceil(N / batch) cross-entropy updates.

    Frozen groups stay untouched; with a fixed seed in deterministic mode the
    history is bit-identical across runs. A non-finite loss aborts with the
    last finite checkpoint and a divergence report.
    """
    recipe.validate()
    seed_everything(recipe.seed)
    if recipe.freeze:
        freeze(model, recipe.freeze)
    optimizer = _build_optimizer(model, recipe)
    tokens, mask, images, labels = _tensors(train_set)
    n = len(train_set)
    history = TrainHistory()
    rng = np.random.Generator(np.random.PCG64(recipe.seed))
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None

    last_finite_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_val = -1.0
    best_path = None

    model.train()
    for epoch in range(recipe.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, n, recipe.batch_size):
            idx = torch.from_numpy(order[start:start + recipe.batch_size])
            logits = model(tokens[idx], mask[idx], images[idx])
            loss = F.cross_entropy(logits, labels[idx])
            if not torch.isfinite(loss):
                report = {
                    "epoch": epoch + 1,
                    "step": start // recipe.batch_size + 1,
                    "loss": float(loss.detach()),
                    "epochs_completed": len(history.train_loss),
                }
                path = None
                if checkpoint_dir is not None:
                    model.load_state_dict(last_finite_state)
                    path = save_checkpoint(
                        checkpoint_dir / "diverged_last_finite.ckpt.npz", model,
                        {**(checkpoint_manifest or {}), "divergence": report},
                    )
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}", checkpoint_path=path, report=report
                )
            if loss.requires_grad:  # everything frozen -> evaluation-only pass
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            bsz = len(idx)
            epoch_loss += float(loss.detach()) * bsz
            epoch_correct += int((decide(logits.detach()) == labels[idx]).sum())
        history.train_loss.append(epoch_loss / n)
        history.train_acc.append(epoch_correct / n)
        last_finite_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if val_set is not None:
            val_acc = evaluate_accuracy(model, val_set)
            history.val_acc.append(val_acc)
            if checkpoint_dir is not None and val_acc > best_val:
                best_val = val_acc
                best_path = save_checkpoint(
                    checkpoint_dir / "best_val.ckpt.npz", model,
                    {**(checkpoint_manifest or {}), "epoch": epoch + 1, "val_acc": val_acc},
                )
        history.seconds.append(time.perf_counter() - t0)
        if log is not None:
            msg = (
                f"epoch {epoch + 1}/{recipe.epochs} loss {history.train_loss[-1]:.4f} "
                f"acc {history.train_acc[-1]:.3f}"
            )
            if val_set is not None:
                msg += f" val {history.val_acc[-1]:.3f}"
            log(msg)

    model.eval()
    final_path = None
    if checkpoint_dir is not None:
        final_path = save_checkpoint(
            checkpoint_dir / "final.ckpt.npz", model, checkpoint_manifest, optimizer
        )
        history.to_csv(checkpoint_dir / "history.csv")
    return TrainResult(history=history, checkpoint_path=final_path, best_val_path=best_path)
