"""Steady-state inference latency harness.

Protocol: a fixed input, batch size 1, single stream; `warmup` discarded
iterations followed by `iters` timed ones. The harness wants exclusive
machine use; statistics are only comparable within one machine/thread
configuration. Absolute reference numbers from other hardware are carried
under distinct runtime tags and never compared numerically.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch

from .errors import ValidationError

RUNTIME_TAGS = ("in_process", "exchange_runtime", "optimized_runtime")

MIN_WARMUP = 10
MIN_TIMED = 30

DEFAULT_WARMUP = 50
DEFAULT_ITERS = 200

# generous single-machine scheduler jitter allowance for sleep-based
# calibration checks, milliseconds
SCHEDULER_JITTER_MS = 3.0


@dataclass
class LatencyReport:
    model_name: str
    runtime: str
    warmup_iters: int
    timed_iters: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    std_ms: float
    min_ms: float
    max_ms: float
    batch_size: int
    hardware: str

    def validate(self) -> "LatencyReport":
        if self.runtime not in RUNTIME_TAGS:
            raise ValidationError(f"runtime tag must be one of {RUNTIME_TAGS}, got {self.runtime!r}")
        if self.timed_iters < MIN_TIMED:
            raise ValidationError(f"timed_iters >= {MIN_TIMED} required, got {self.timed_iters}")
        if self.p95_ms < self.median_ms:
            raise ValidationError("latency stats violate p95 >= median")
        for field_name in ("mean_ms", "median_ms", "p95_ms", "std_ms", "min_ms", "max_ms"):
            if not math.isfinite(getattr(self, field_name)):
                raise ValidationError(f"non-finite latency statistic {field_name}")
        return self

    def to_json(self, path: Optional[Path] = None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "LatencyReport":
        if isinstance(source, (str, Path)) and Path(source).exists():
            payload = json.loads(Path(source).read_text())
        else:
            payload = json.loads(source)
        return cls(**payload).validate()


def probe_hardware() -> str:
    return (
        f"{platform.machine()} {platform.system().lower()} "
        f"torch-{torch.__version__} threads-{torch.get_num_threads()}"
    )


def measure_latency(
    model_runner: Callable[[], object],
    warmup: int = DEFAULT_WARMUP,
    iters: int = DEFAULT_ITERS,
    model_name: str = "model",
    runtime: str = "in_process",
    hardware: Optional[str] = None,
    batch_size: int = 1,
) -> LatencyReport:
    """Time `iters` single-stream calls after `warmup` discarded ones."""
    if warmup < MIN_WARMUP:
        raise ValidationError(f"warmup >= {MIN_WARMUP} required, got {warmup}")
    if iters < MIN_TIMED:
        raise ValidationError(f"iters >= {MIN_TIMED} required, got {iters}")
    for _ in range(warmup):
        model_runner()
    times_ms = np.empty(iters, dtype=np.float64)
    for i in range(iters):
        t0 = time.perf_counter_ns()
        model_runner()
        times_ms[i] = (time.perf_counter_ns() - t0) / 1e6
    if not np.all(np.isfinite(times_ms)):
        raise ValidationError("non-finite timings recorded")
    return LatencyReport(
        model_name=model_name,
        runtime=runtime,
        warmup_iters=warmup,
        timed_iters=iters,
        mean_ms=float(times_ms.mean()),
        median_ms=float(np.median(times_ms)),
        p95_ms=float(np.percentile(times_ms, 95)),
        std_ms=float(times_ms.std()),
        min_ms=float(times_ms.min()),
        max_ms=float(times_ms.max()),
        batch_size=batch_size,
        hardware=hardware if hardware is not None else probe_hardware(),
    ).validate()


def model_runner(model: torch.nn.Module, batch: Optional[dict] = None) -> Callable[[], object]:
    """Fixed-input, no-grad forward closure for the in-process harness."""
    if batch is None:
        batch = model.probe_batch(batch_size=1, seed=0)
    model.eval()
    tokens, mask, image = batch["tokens"], batch["mask"], batch["image"]

    def run():
        with torch.no_grad():
            return model(tokens, mask, image)

    return run


def compare_reports(a: LatencyReport, b: LatencyReport) -> dict:
    """Mean/median deltas for a pair of reports over the same model."""
    return {
        "model_name": a.model_name,
        "runtime_a": a.runtime,
        "runtime_b": b.runtime,
        "mean_delta_ms": b.mean_ms - a.mean_ms,
        "median_delta_ms": b.median_ms - a.median_ms,
    }


def compare_report_sets(set_a: list[LatencyReport], set_b: list[LatencyReport]) -> dict:
    """Per-model deltas plus a latency-ordering agreement flag.

    Models present in only one set produce a warning and are skipped.
    """
    by_a = {r.model_name: r for r in set_a}
    by_b = {r.model_name: r for r in set_b}
    shared = sorted(set(by_a) & set(by_b))
    warnings = []
    only_a = sorted(set(by_a) - set(by_b))
    only_b = sorted(set(by_b) - set(by_a))
    if only_a or only_b:
        warnings.append(f"disjoint models skipped: only_a={only_a} only_b={only_b}")
    rows = [compare_reports(by_a[m], by_b[m]) for m in shared]
    order_a = [m for m in sorted(shared, key=lambda m: by_a[m].mean_ms)]
    order_b = [m for m in sorted(shared, key=lambda m: by_b[m].mean_ms)]
    return {
        "rows": rows,
        "ordering_agreement": order_a == order_b,
        "ordering_a": order_a,
        "ordering_b": order_b,
        "warnings": warnings,
    }
