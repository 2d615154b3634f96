"""Trade-off records, CSV/plot emission and the reference table layouts."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import ValidationError
from .latency import LatencyReport
from .metrics import MetricsRecord

_DISPLAY = {
    "vision_base": {"cnn": "MobileNetV2", "vit": "ViT"},
    "text_base": "BERT",
    "late": "Late Fusion",
    "intermediate": "Inter. Fusion",
    "early": "Early Fusion",
}
_STRATEGY_ROWS = ("late", "intermediate", "early")


@dataclass
class TradeoffRecord:
    model_name: str
    strategy: str
    binary_accuracy: Optional[float]
    mean_ms: Optional[float]
    runtime: str
    vision: Optional[str] = None


def display_name(strategy: str, vision: Optional[str] = None) -> str:
    entry = _DISPLAY.get(strategy, strategy)
    if isinstance(entry, dict):
        return entry.get(vision or "cnn", strategy)
    return entry


def collect_tradeoff(
    metrics: Sequence[MetricsRecord],
    latencies: Sequence[LatencyReport],
) -> List[TradeoffRecord]:
    """Join accuracy and latency by model name; one record per
    (model, runtime) pair. Models missing one side keep a None there."""
    latency_by_key: Dict[tuple, LatencyReport] = {}
    for rep in latencies:
        latency_by_key[(rep.model_name, rep.runtime)] = rep
    acc_by_model = {m.model_name: m for m in metrics}
    records: List[TradeoffRecord] = []
    seen_models = set()
    for (model_name, runtime), rep in sorted(latency_by_key.items()):
        met = acc_by_model.get(model_name)
        records.append(
            TradeoffRecord(
                model_name=model_name,
                strategy=_strategy_from_name(model_name),
                binary_accuracy=met.binary_accuracy if met else None,
                mean_ms=rep.mean_ms,
                runtime=runtime,
                vision=met.vision if met else _vision_from_name(model_name),
            )
        )
        seen_models.add(model_name)
    for met in metrics:
        if met.model_name not in seen_models:
            records.append(
                TradeoffRecord(
                    model_name=met.model_name,
                    strategy=_strategy_from_name(met.model_name),
                    binary_accuracy=met.binary_accuracy,
                    mean_ms=None,
                    runtime="in_process",
                    vision=met.vision,
                )
            )
    return records


def _strategy_from_name(model_name: str) -> str:
    for strategy in ("late", "intermediate", "early", "text_base", "vision_base"):
        if model_name.startswith(strategy):
            return strategy
    return model_name


def _vision_from_name(model_name: str) -> Optional[str]:
    for kind in ("cnn", "vit"):
        if model_name.endswith("_" + kind):
            return kind
    return None


# ---------------------------------------------------------------------------
# emission

def write_tradeoff_csv(records: Sequence[TradeoffRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "strategy", "accuracy", "mean_ms", "runtime"])
        for r in sorted(records, key=lambda r: (r.model_name, r.runtime)):
            writer.writerow([
                r.model_name,
                r.strategy,
                "" if r.binary_accuracy is None else f"{r.binary_accuracy:.6f}",
                "" if r.mean_ms is None else f"{r.mean_ms:.6f}",
                r.runtime,
            ])


def read_tradeoff_csv(path: Path) -> List[TradeoffRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                TradeoffRecord(
                    model_name=row["model"],
                    strategy=row["strategy"],
                    binary_accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                    mean_ms=float(row["mean_ms"]) if row["mean_ms"] else None,
                    runtime=row["runtime"],
                    vision=_vision_from_name(row["model"]),
                )
            )
    return records


def plot_tradeoff(records: Sequence[TradeoffRecord], path: Path) -> None:
    """Accuracy (vertical) vs mean latency (horizontal) scatter."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plotted = [r for r in records if r.binary_accuracy is not None and r.mean_ms is not None]
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    markers = {"late": "o", "intermediate": "s", "early": "^"}
    for r in sorted(plotted, key=lambda r: (r.model_name, r.runtime)):
        ax.scatter(
            r.mean_ms, 100.0 * r.binary_accuracy,
            marker=markers.get(r.strategy, "D"), s=60,
        )
        ax.annotate(
            display_name(r.strategy, r.vision), (r.mean_ms, 100.0 * r.binary_accuracy),
            textcoords="offset points", xytext=(6, 4), fontsize=8,
        )
    ax.set_xlabel("Inference latency (ms)")
    ax.set_ylabel("Binary accuracy (%)")
    ax.set_title("Accuracy vs. inference latency trade-off")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": "fusionbench"})
    plt.close(fig)


def _fmt_pct(value: Optional[float]) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def _fmt_ms(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def accuracy_table_md(metrics: Sequence[MetricsRecord]) -> str:
    """Accuracy layout: Model | Modality | BA (%) (M) | BA (%) (V)."""
    rows = []
    order = ["vision_base", "text_base", "late", "intermediate", "early"]
    for strategy in order:
        entries = [m for m in metrics if _strategy_from_name(m.model_name) == strategy]
        if not entries:
            continue
        if strategy == "vision_base":
            for m in sorted(entries, key=lambda m: m.vision or ""):
                cell_m = _fmt_pct(m.binary_accuracy) if m.vision != "vit" else "-"
                cell_v = _fmt_pct(m.binary_accuracy) if m.vision == "vit" else "-"
                rows.append((display_name(strategy, m.vision), m.modality, cell_m, cell_v))
        else:
            cnn = next((m for m in entries if m.vision in (None, "cnn")), None)
            vit = next((m for m in entries if m.vision == "vit"), None)
            modality = entries[0].modality
            rows.append((
                display_name(strategy, "cnn"), modality,
                _fmt_pct(cnn.binary_accuracy) if cnn else "-",
                _fmt_pct(vit.binary_accuracy) if vit else "-",
            ))
    lines = [
        "| Model | Modality | BA (%) (M) | BA (%) (V) |",
        "| --- | --- | --- | --- |",
    ]
    lines += [f"| {a} | {b} | {c} | {d} |" for a, b, c, d in rows]
    return "\n".join(lines) + "\n"


def latency_table_md(records: Sequence[TradeoffRecord], runtime: str = "exchange_runtime") -> str:
    """Latency layout: Model | Accuracy (%) | Latency (ms) (M)."""
    wanted = [r for r in records if r.runtime == runtime and r.vision in (None, "cnn")]
    wanted.sort(key=lambda r: (-(r.mean_ms or 0.0)))
    lines = [
        "| Model | Accuracy (%) | Latency (ms) (M) |",
        "| --- | --- | --- |",
    ]
    for r in wanted:
        lines.append(
            f"| {display_name(r.strategy, r.vision)} | {_fmt_pct(r.binary_accuracy)} | {_fmt_ms(r.mean_ms)} |"
        )
    return "\n".join(lines) + "\n"


def optimized_latency_table_md(records: Sequence[TradeoffRecord], runtime: str = "optimized_runtime") -> str:
    """Vision-comparison layout: Model | Latency (ms) (M) | Latency (ms) (V)."""
    per_strategy: Dict[str, Dict[str, Optional[float]]] = {}
    for r in records:
        if r.runtime != runtime:
            continue
        kind = "vit" if r.vision == "vit" else "cnn"
        per_strategy.setdefault(r.strategy, {})[kind] = r.mean_ms
    lines = [
        "| Model | Latency (ms) (M) | Latency (ms) (V) |",
        "| --- | --- | --- |",
    ]
    for strategy in _STRATEGY_ROWS:
        if strategy not in per_strategy:
            continue
        cells = per_strategy[strategy]
        lines.append(
            f"| {display_name(strategy, 'cnn')} | {_fmt_ms(cells.get('cnn'))} | {_fmt_ms(cells.get('vit'))} |"
        )
    return "\n".join(lines) + "\n"


def emit_tradeoff(
    records: Sequence[TradeoffRecord],
    out_dir: Path,
    metrics: Sequence[MetricsRecord] = (),
) -> Dict[str, Path]:
    """Write the trade-off CSV, the scatter plot and the table layouts."""
    if not records:
        raise ValidationError("emit_tradeoff: need at least one record")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "tradeoff.csv",
        "plot": out_dir / "tradeoff.png",
        "accuracy_table": out_dir / "table_accuracy.md",
        "latency_table": out_dir / "table_latency.md",
        "optimized_table": out_dir / "table_latency_optimized.md",
    }
    write_tradeoff_csv(records, paths["csv"])
    plot_tradeoff(records, paths["plot"])
    paths["accuracy_table"].write_text(accuracy_table_md(metrics))
    table_runtime = "exchange_runtime" if any(r.runtime == "exchange_runtime" for r in records) else "in_process"
    paths["latency_table"].write_text(latency_table_md(records, table_runtime))
    paths["optimized_table"].write_text(optimized_latency_table_md(records))
    return paths
