"""Embedded exchange-runtime: a numpy executor for exported graphs.

Implements exactly the op surface the exporter emits (opset 13 semantics),
in float32, so exported graphs can be verified against the live models
without an external runtime. Nodes are executed in graph order (the
exporter emits topologically sorted graphs).
"""

from __future__ import annotations

from typing import Dict, List

import numpy as np
from scipy.special import erf

from .errors import GraphLoadError, ShapeError
from .onnx_proto import ParsedModel, ParsedNode, parse_model


def _reshape(data: np.ndarray, shape: np.ndarray) -> np.ndarray:
    target: List[int] = []
    for i, dim in enumerate(int(d) for d in shape):
        if dim == 0:
            target.append(data.shape[i])
        else:
            target.append(dim)
    return data.reshape(target)


def _conv(x, w, attrs):
    group = int(attrs.get("group", 1))
    strides = attrs.get("strides", [1, 1])
    pads = attrs.get("pads", [0, 0, 0, 0])
    sh, sw = int(strides[0]), int(strides[1])
    pt, pl, pb, pr = (int(p) for p in pads)
    x = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    kh, kw = w.shape[2], w.shape[3]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::sh, ::sw]  # (B, C, H', W', kh, kw)
    c_in, c_out = x.shape[1], w.shape[0]
    if group == 1:
        out = np.einsum("bchwij,ocij->bohw", windows, w, optimize=True)
    elif group == c_in and w.shape[1] == 1:
        # depthwise: one filter per channel, possibly with channel multiplier 1
        out = np.einsum("bchwij,cij->bchw", windows, w[:, 0], optimize=True)
    else:
        per_in = c_in // group
        per_out = c_out // group
        chunks = []
        for g in range(group):
            win = windows[:, g * per_in:(g + 1) * per_in]
            ker = w[g * per_out:(g + 1) * per_out]
            chunks.append(np.einsum("bchwij,ocij->bohw", win, ker, optimize=True))
        out = np.concatenate(chunks, axis=1)
    return np.ascontiguousarray(out, dtype=np.float32)


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return (e / np.sum(e, axis=axis, keepdims=True)).astype(np.float32)


class GraphExecutor:
    """Runs a parsed exchange graph on numpy inputs."""

    def __init__(self, model: ParsedModel):
        self.model = model
        self.input_names = [vi.name for vi in model.inputs]
        self.output_names = [vi.name for vi in model.outputs]

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GraphExecutor":
        return cls(parse_model(blob))

    @classmethod
    def from_file(cls, path) -> "GraphExecutor":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def run(self, feeds: Dict[str, np.ndarray]) -> List[np.ndarray]:
        values: Dict[str, np.ndarray] = dict(self.model.initializers)
        for name in self.input_names:
            if name not in feeds:
                raise ShapeError(f"missing graph input {name!r}")
            values[name] = np.asarray(feeds[name])
        for node in self.model.nodes:
            try:
                self._execute(node, values)
            except GraphLoadError:
                raise
            except Exception as exc:
                raise GraphLoadError(
                    f"executing {node.op_type} node {node.name or node.outputs[0]!r}: {exc}"
                ) from exc
        missing = [n for n in self.output_names if n not in values]
        if missing:
            raise GraphLoadError(f"graph outputs never produced: {missing}")
        return [values[n] for n in self.output_names]

    def _execute(self, node: ParsedNode, values: Dict[str, np.ndarray]) -> None:
        op = node.op_type
        ins = [values[name] for name in node.inputs if name]
        attrs = node.attrs
        if op == "MatMul":
            out = np.matmul(ins[0], ins[1]).astype(np.float32)
        elif op == "Add":
            out = ins[0] + ins[1]
        elif op == "Sub":
            out = ins[0] - ins[1]
        elif op == "Mul":
            out = ins[0] * ins[1]
        elif op == "Div":
            out = ins[0] / ins[1]
        elif op == "Sqrt":
            out = np.sqrt(ins[0])
        elif op == "Erf":
            out = erf(ins[0]).astype(np.float32)
        elif op == "Tanh":
            out = np.tanh(ins[0])
        elif op == "Relu":
            out = np.maximum(ins[0], np.float32(0.0))
        elif op == "Clip":
            out = np.clip(ins[0], ins[1], ins[2])
        elif op == "Softmax":
            out = _softmax(ins[0], int(attrs.get("axis", -1)))
        elif op == "Transpose":
            out = np.transpose(ins[0], attrs["perm"])
        elif op == "Reshape":
            out = _reshape(ins[0], ins[1])
        elif op == "Concat":
            out = np.concatenate(ins, axis=int(attrs["axis"]))
        elif op == "Gather":
            axis = int(attrs.get("axis", 0))
            out = np.take(ins[0], ins[1].astype(np.int64), axis=axis)
        elif op == "Slice":
            out = self._slice(ins)
        elif op == "ReduceMean":
            axes = tuple(attrs["axes"])
            keepdims = bool(attrs.get("keepdims", 1))
            out = np.mean(ins[0], axis=axes, keepdims=keepdims, dtype=np.float32)
        elif op == "Unsqueeze":
            out = ins[0]
            for ax in sorted(int(a) for a in ins[1]):
                out = np.expand_dims(out, ax)
        elif op == "Tile":
            out = np.tile(ins[0], [int(r) for r in ins[1]])
        elif op == "Conv":
            out = _conv(ins[0], ins[1], attrs)
            if len(ins) == 3:  # bias
                out = out + ins[2].reshape(1, -1, 1, 1)
        elif op == "BatchNormalization":
            x, scale, bias, mean, var = ins
            eps = np.float32(attrs.get("epsilon", 1e-5))
            shape = (1, -1, 1, 1)
            out = (x - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
            out = (out * scale.reshape(shape) + bias.reshape(shape)).astype(np.float32)
        elif op == "GlobalAveragePool":
            out = np.mean(ins[0], axis=(2, 3), keepdims=True, dtype=np.float32)
        elif op == "Identity":
            out = ins[0]
        else:
            raise GraphLoadError(f"unsupported op {op!r}")
        if out.dtype == np.float64:
            out = out.astype(np.float32)
        values[node.outputs[0]] = out

    @staticmethod
    def _slice(ins: List[np.ndarray]) -> np.ndarray:
        data, starts, ends = ins[0], ins[1], ins[2]
        axes = ins[3] if len(ins) > 3 else np.arange(len(starts))
        slicer = [slice(None)] * data.ndim
        for start, end, axis in zip(starts, ends, axes):
            slicer[int(axis)] = slice(int(start), int(end))
        return data[tuple(slicer)]
