"""The accuracy-vs-latency trade-off space.

Measures in-process latency of the benchmark trio (untrained weights;
latency depends on shapes, not values), joins it with the published
full-scale reference records, and emits the trade-off scatter plus the
reference table layouts.
"""

import tempfile
from pathlib import Path

import torch

from fusionbench import build_cnn_backbone, build_fusion, build_text_encoder
from fusionbench.flops import count_flops_params
from fusionbench.fusion import FusionSpec
from fusionbench.latency import measure_latency, model_runner
from fusionbench.profiles import benchmark_cnn_config, benchmark_text_config
from fusionbench.reference import (
    REFERENCE_ACCURACY,
    REFERENCE_LATENCY_EXCHANGE,
    REFERENCE_LATENCY_OPTIMIZED,
)
from fusionbench.report import collect_tradeoff, emit_tradeoff

torch.manual_seed(0)
torch.set_num_threads(1)  # single-stream protocol; lowest variance

print("strategy        MACs      mean ms   median ms")
for strategy in ("early", "intermediate", "late"):
    model = build_fusion(
        build_text_encoder(benchmark_text_config()),
        build_cnn_backbone(benchmark_cnn_config()),
        FusionSpec(strategy=strategy),
    )
    macs = count_flops_params(model).flops
    report = measure_latency(model_runner(model), warmup=20, iters=60,
                             model_name=strategy)
    print(f"{strategy:13s} {macs / 1e6:7.1f}M {report.mean_ms:9.2f} {report.median_ms:10.2f}")

out_dir = Path(tempfile.mkdtemp(prefix="fusionbench-tradeoff-"))
records = collect_tradeoff(
    REFERENCE_ACCURACY, REFERENCE_LATENCY_EXCHANGE + REFERENCE_LATENCY_OPTIMIZED
)
paths = emit_tradeoff(records, out_dir, REFERENCE_ACCURACY)
print("\nfull-scale reference tables:")
print((out_dir / "table_latency.md").read_text())
print(f"scatter plot: {paths['plot']}")
