import json
import time

import pytest

from fusionbench.errors import ValidationError
from fusionbench.latency import (
    SCHEDULER_JITTER_MS,
    LatencyReport,
    compare_report_sets,
    measure_latency,
)


def _sleeper(ms):
    def run():
        time.sleep(ms / 1000.0)

    return run


def test_constant_time_stub_within_jitter_bound():
    report = measure_latency(_sleeper(5.0), warmup=10, iters=30, model_name="stub")
    assert abs(report.mean_ms - 5.0) <= SCHEDULER_JITTER_MS


def test_latency_stats_ordering():
    report = measure_latency(_sleeper(1.0), warmup=10, iters=40)
    assert report.min_ms <= report.median_ms <= report.p95_ms <= report.max_ms
    assert report.p95_ms >= report.median_ms


def test_latency_preconditions():
    with pytest.raises(ValidationError, match="iters"):
        measure_latency(_sleeper(0.1), warmup=10, iters=10)
    with pytest.raises(ValidationError, match="warmup"):
        measure_latency(_sleeper(0.1), warmup=5, iters=30)


def test_report_validation():
    with pytest.raises(ValidationError, match="runtime"):
        LatencyReport("m", "gpu", 10, 30, 1, 1, 1, 0, 1, 1, 1, "x").validate()
    with pytest.raises(ValidationError, match="timed_iters"):
        LatencyReport("m", "in_process", 10, 10, 1, 1, 1, 0, 1, 1, 1, "x").validate()
    with pytest.raises(ValidationError, match="p95"):
        LatencyReport("m", "in_process", 10, 30, 1, 2, 1, 0, 1, 2, 1, "x").validate()


def test_report_json_roundtrip(tmp_path):
    report = measure_latency(_sleeper(0.2), warmup=10, iters=30, model_name="rt")
    path = tmp_path / "report.json"
    report.to_json(path)
    back = LatencyReport.from_json(path)
    assert back == report


def test_report_matches_shared_schema(tmp_path):
    import jsonschema

    schema = json.loads((__import__("pathlib").Path(__file__).parent.parent / "schemas" /
                         "latency_report.schema.json").read_text())
    report = measure_latency(_sleeper(0.2), warmup=10, iters=30, model_name="schema")
    payload = json.loads(report.to_json())
    jsonschema.validate(payload, schema)


def _mk(model, mean, runtime="in_process"):
    return LatencyReport(model, runtime, 10, 30, mean, mean, mean, 0.0, mean, mean, 1, "hw")


def test_compare_identical_reports():
    side = [_mk("a", 1.0), _mk("b", 2.0)]
    result = compare_report_sets(side, side)
    assert result["ordering_agreement"] is True
    assert all(row["mean_delta_ms"] == 0.0 for row in result["rows"])
    assert result["warnings"] == []


def test_compare_disjoint_models_warns():
    result = compare_report_sets([_mk("a", 1.0)], [_mk("b", 2.0)])
    assert result["rows"] == []
    assert result["warnings"]


def test_compare_detects_ordering_flip():
    side_a = [_mk("a", 1.0), _mk("b", 2.0)]
    side_b = [_mk("a", 3.0), _mk("b", 2.0)]
    assert compare_report_sets(side_a, side_b)["ordering_agreement"] is False
