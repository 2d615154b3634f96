import json

import numpy as np
import pytest
import torch

from fusionbench import CnnBackboneConfig, TextEncoderConfig, build_text_encoder
from fusionbench.errors import GraphLoadError, ValidationError
from fusionbench.export import export_graph, verify_parity
from fusionbench.fusion import UnimodalClassifier
from fusionbench.onnx_proto import OPSET_VERSION, parse_model, tensor_proto, _parse_tensor
from fusionbench.onnx_run import GraphExecutor

from conftest import make_trio

_SMALL_TEXT = TextEncoderConfig(num_layers=8, max_seq_len=16, vocab_size=300)
_SMALL_CNN = CnnBackboneConfig()


def _small(strategy):
    return make_trio(strategy, text_cfg=_SMALL_TEXT, vision_cfg=_SMALL_CNN)


# ---------------------------------------------------------------------------
# proto layer

@pytest.mark.parametrize("array", [
    np.asarray(0, dtype=np.int64),
    np.array([1, 2, 3], dtype=np.int64),
    np.random.default_rng(0).normal(size=(2, 3)).astype(np.float32),
])
def test_tensor_proto_roundtrip(array):
    parsed = _parse_tensor(tensor_proto("t", array))
    assert parsed.name == "t"
    assert parsed.array.shape == array.shape
    assert parsed.array.dtype == array.dtype
    assert np.array_equal(parsed.array, array)


def test_parse_model_structure(tmp_path):
    model = _small("late")
    artifact = export_graph(model, tmp_path / "late.onnx")
    parsed = parse_model(artifact.graph_path.read_bytes())
    assert parsed.opset == OPSET_VERSION
    assert [vi.name for vi in parsed.inputs] == ["tokens", "mask", "image"]
    assert [vi.name for vi in parsed.outputs] == ["logits"]
    assert parsed.inputs[0].shape[0] == "batch"  # dynamic batch dimension
    assert parsed.producer == "fusionbench"


# ---------------------------------------------------------------------------
# export + parity

@pytest.mark.parametrize("strategy", ["late", "intermediate", "early"])
def test_export_parity_all_strategies(tmp_path, strategy):
    model = _small(strategy)
    artifact = export_graph(model, tmp_path / f"{strategy}.onnx")
    report = verify_parity(model, artifact, n_batches=4, tol=1e-5)
    assert report.passed, f"max abs diff {report.max_abs_diff}"
    assert report.argmax_agreement == 1.0


def test_export_parity_vit(tmp_path):
    model = make_trio("early", vision="vit", text_cfg=_SMALL_TEXT)
    artifact = export_graph(model, tmp_path / "early_vit.onnx")
    assert verify_parity(model, artifact, n_batches=3, tol=1e-5).passed


def test_export_parity_unimodal(tmp_path):
    model = UnimodalClassifier(build_text_encoder(_SMALL_TEXT))
    artifact = export_graph(model, tmp_path / "text.onnx")
    assert verify_parity(model, artifact, n_batches=3, tol=1e-5).passed


def test_input_signature_unified(tmp_path):
    for strategy in ("late", "intermediate", "early"):
        model = _small(strategy)
        artifact = export_graph(model, tmp_path / f"{strategy}.onnx")
        assert [i["name"] for i in artifact.input_signature] == ["tokens", "mask", "image"]


def test_export_deterministic_bytes(tmp_path):
    model = _small("late")
    a = export_graph(model, tmp_path / "a.onnx")
    b = export_graph(model, tmp_path / "b.onnx")
    assert a.graph_path.read_bytes() == b.graph_path.read_bytes()


def test_export_dropout_folded_out(tmp_path):
    model = _small("early")
    model.train()  # exporter must push eval semantics itself
    artifact = export_graph(model, tmp_path / "e.onnx")
    executor = GraphExecutor.from_file(artifact.graph_path)
    batch = model.probe_batch(2, seed=0)
    feeds = {k: v.numpy() for k, v in batch.items()}
    first = executor.run(feeds)[0]
    second = executor.run(feeds)[0]
    assert np.array_equal(first, second)


def test_executor_dynamic_batch(tmp_path):
    model = _small("late")
    artifact = export_graph(model, tmp_path / "late.onnx")
    executor = GraphExecutor.from_file(artifact.graph_path)
    for batch_size in (1, 3):
        batch = model.probe_batch(batch_size, seed=1)
        (out,) = executor.run({k: v.numpy() for k, v in batch.items()})
        assert out.shape == (batch_size, 2)


def test_corrupted_file_fails_loudly(tmp_path):
    model = _small("late")
    artifact = export_graph(model, tmp_path / "late.onnx")
    blob = bytearray(artifact.graph_path.read_bytes())
    corrupted = tmp_path / "corrupt.onnx"
    corrupted.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(GraphLoadError):
        GraphExecutor.from_file(corrupted)


def test_verify_parity_rejects_zero_batches(tmp_path):
    model = _small("late")
    artifact = export_graph(model, tmp_path / "late.onnx")
    with pytest.raises(ValidationError):
        verify_parity(model, artifact, n_batches=0)


def test_sidecar_metadata(tmp_path):
    model = _small("intermediate")
    artifact = export_graph(model, tmp_path / "inter.onnx", model_name="inter_toy",
                            config_hash="cafe1234")
    meta = json.loads(artifact.meta_path.read_text())
    assert meta["strategy"] == "intermediate"
    assert meta["model_name"] == "inter_toy"
    assert meta["config_hash"] == "cafe1234"
    assert meta["opset"] == OPSET_VERSION
    assert [i["name"] for i in meta["inputs"]] == ["tokens", "mask", "image"]
    assert meta["outputs"][0]["shape"] == ["batch", 2]
