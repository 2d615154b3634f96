"""Minimal ONNX protobuf wire-format serialization.

The package mirror carries no onnx/onnxruntime distribution, so the
exchange files are serialized (and parsed back) directly at the protobuf
wire level against the stable ONNX schema field numbers. Only the message
subset the exporter emits is supported: ModelProto / GraphProto /
NodeProto / AttributeProto / TensorProto / ValueInfoProto and the tensor
types FLOAT and INT64. Serialization is fully deterministic, so identical
models produce byte-identical graph files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ExportError, GraphLoadError

IR_VERSION = 8
OPSET_VERSION = 13

FLOAT = 1
INT64 = 7

_NUMPY_TO_ONNX = {np.dtype(np.float32): FLOAT, np.dtype(np.int64): INT64}
_ONNX_TO_NUMPY = {FLOAT: np.dtype(np.float32), INT64: np.dtype(np.int64)}

# AttributeProto.AttributeType
ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_STRING = 3
ATTR_FLOATS = 6
ATTR_INTS = 7


# ---------------------------------------------------------------------------
# wire-format primitives

def _varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1  # two's complement, 10-byte encoding
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _key(field_no: int, wire_type: int) -> bytes:
    return _varint((field_no << 3) | wire_type)


def _field_varint(field_no: int, value: int) -> bytes:
    return _key(field_no, 0) + _varint(value)


def _field_bytes(field_no: int, payload: bytes) -> bytes:
    return _key(field_no, 2) + _varint(len(payload)) + payload


def _field_string(field_no: int, text: str) -> bytes:
    return _field_bytes(field_no, text.encode("utf-8"))


def _packed_int64(field_no: int, values: Sequence[int]) -> bytes:
    payload = b"".join(_varint(int(v)) for v in values)
    return _field_bytes(field_no, payload)


# ---------------------------------------------------------------------------
# message construction

def tensor_proto(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim > 0 and not array.flags["C_CONTIGUOUS"]:
        array = np.ascontiguousarray(array)  # keeps 0-d tensors 0-d
    if array.dtype not in _NUMPY_TO_ONNX:
        raise ExportError(f"initializer {name}: unsupported dtype {array.dtype}")
    parts = [
        _packed_int64(1, array.shape),  # dims
        _field_varint(2, _NUMPY_TO_ONNX[array.dtype]),  # data_type
        _field_string(8, name),
        _field_bytes(9, array.tobytes()),  # raw_data (little-endian)
    ]
    return b"".join(parts)


def _attribute(name: str, value) -> bytes:
    parts = [_field_string(1, name)]
    if isinstance(value, float):
        parts.append(_key(2, 5) + struct.pack("<f", value))
        parts.append(_field_varint(20, ATTR_FLOAT))
    elif isinstance(value, bool):
        raise ExportError(f"attribute {name}: ambiguous bool")
    elif isinstance(value, int):
        parts.append(_field_varint(3, value))
        parts.append(_field_varint(20, ATTR_INT))
    elif isinstance(value, str):
        parts.append(_field_bytes(4, value.encode("utf-8")))
        parts.append(_field_varint(20, ATTR_STRING))
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        parts.extend(_field_varint(8, v) for v in value)  # ints, unpacked
        parts.append(_field_varint(20, ATTR_INTS))
    elif isinstance(value, (list, tuple)) and all(isinstance(v, float) for v in value):
        parts.extend(_key(7, 5) + struct.pack("<f", v) for v in value)
        parts.append(_field_varint(20, ATTR_FLOATS))
    else:
        raise ExportError(f"attribute {name}: unsupported value {value!r}")
    return b"".join(parts)


def node_proto(
    op_type: str,
    inputs: Sequence[str],
    outputs: Sequence[str],
    name: str = "",
    attrs: Optional[dict] = None,
) -> bytes:
    parts = [_field_string(1, i) for i in inputs]
    parts += [_field_string(2, o) for o in outputs]
    if name:
        parts.append(_field_string(3, name))
    parts.append(_field_string(4, op_type))
    for key in sorted(attrs or {}):
        parts.append(_field_bytes(5, _attribute(key, attrs[key])))
    return b"".join(parts)


Dim = Union[int, str]


def value_info(name: str, elem_type: int, shape: Sequence[Dim]) -> bytes:
    dims = []
    for d in shape:
        if isinstance(d, str):
            dims.append(_field_bytes(1, _field_string(2, d)))  # dim_param
        else:
            dims.append(_field_bytes(1, _field_varint(1, int(d))))  # dim_value
    shape_proto = b"".join(dims)
    tensor_type = _field_varint(1, elem_type) + _field_bytes(2, shape_proto)
    type_proto = _field_bytes(1, tensor_type)
    return _field_string(1, name) + _field_bytes(2, type_proto)


def model_proto(
    graph_name: str,
    nodes: Sequence[bytes],
    initializers: Sequence[bytes],
    inputs: Sequence[bytes],
    outputs: Sequence[bytes],
    producer: str = "fusionbench",
    producer_version: str = "0.1.0",
    opset: int = OPSET_VERSION,
) -> bytes:
    graph = b"".join(
        [_field_bytes(1, n) for n in nodes]
        + [_field_string(2, graph_name)]
        + [_field_bytes(5, t) for t in initializers]
        + [_field_bytes(11, vi) for vi in inputs]
        + [_field_bytes(12, vi) for vi in outputs]
    )
    opset_entry = _field_string(1, "") + _field_varint(2, opset)
    return b"".join(
        [
            _field_varint(1, IR_VERSION),
            _field_string(2, producer),
            _field_string(3, producer_version),
            _field_bytes(7, graph),
            _field_bytes(8, opset_entry),
        ]
    )


# ---------------------------------------------------------------------------
# parsing (reads the subset this module writes)

def _read_varint(buf: bytes, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise GraphLoadError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise GraphLoadError("varint too long")


def _iter_fields(buf: bytes):
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        field_no, wire = key >> 3, key & 7
        if wire == 0:
            value, pos = _read_varint(buf, pos)
        elif wire == 2:
            length, pos = _read_varint(buf, pos)
            value = buf[pos:pos + length]
            if len(value) != length:
                raise GraphLoadError("truncated length-delimited field")
            pos += length
        elif wire == 5:
            value = struct.unpack("<f", buf[pos:pos + 4])[0]
            pos += 4
        elif wire == 1:
            value = struct.unpack("<d", buf[pos:pos + 8])[0]
            pos += 8
        else:
            raise GraphLoadError(f"unsupported wire type {wire}")
        yield field_no, wire, value


def _signed64(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _parse_packed_int64(payload: bytes) -> List[int]:
    out, pos = [], 0
    while pos < len(payload):
        v, pos = _read_varint(payload, pos)
        out.append(_signed64(v))
    return out


@dataclass
class ParsedTensor:
    name: str
    array: np.ndarray


@dataclass
class ParsedNode:
    op_type: str
    inputs: List[str]
    outputs: List[str]
    attrs: Dict[str, object]
    name: str = ""


@dataclass
class ParsedValueInfo:
    name: str
    elem_type: int
    shape: List[Union[int, str]]


@dataclass
class ParsedModel:
    graph_name: str
    nodes: List[ParsedNode]
    initializers: Dict[str, np.ndarray]
    inputs: List[ParsedValueInfo]
    outputs: List[ParsedValueInfo]
    opset: int
    producer: str = ""


def _parse_tensor(buf: bytes) -> ParsedTensor:
    dims: List[int] = []
    data_type = None
    name = ""
    raw = b""
    for field_no, wire, value in _iter_fields(buf):
        if field_no == 1:
            dims.extend(_parse_packed_int64(value) if wire == 2 else [_signed64(value)])
        elif field_no == 2:
            data_type = value
        elif field_no == 8:
            name = value.decode("utf-8")
        elif field_no == 9:
            raw = value
    if data_type not in _ONNX_TO_NUMPY:
        raise GraphLoadError(f"initializer {name}: unsupported data_type {data_type}")
    array = np.frombuffer(raw, dtype=_ONNX_TO_NUMPY[data_type]).reshape(dims)
    return ParsedTensor(name, array)


def _parse_attribute(buf: bytes) -> Tuple[str, object]:
    name = ""
    attr_type = None
    scalar = None
    ints: List[int] = []
    floats: List[float] = []
    text = None
    for field_no, wire, value in _iter_fields(buf):
        if field_no == 1:
            name = value.decode("utf-8")
        elif field_no == 2:
            scalar = float(value)
        elif field_no == 3:
            scalar = _signed64(value)
        elif field_no == 4:
            text = value.decode("utf-8")
        elif field_no == 7:
            floats.extend(_parse_packed_floats(value) if wire == 2 else [value])
        elif field_no == 8:
            ints.extend(_parse_packed_int64(value) if wire == 2 else [_signed64(value)])
        elif field_no == 20:
            attr_type = value
    if attr_type == ATTR_INTS:
        return name, ints
    if attr_type == ATTR_FLOATS:
        return name, floats
    if attr_type == ATTR_STRING:
        return name, text
    return name, scalar


def _parse_packed_floats(payload: bytes) -> List[float]:
    return list(np.frombuffer(payload, dtype=np.float32))


def _parse_node(buf: bytes) -> ParsedNode:
    node = ParsedNode(op_type="", inputs=[], outputs=[], attrs={})
    for field_no, _, value in _iter_fields(buf):
        if field_no == 1:
            node.inputs.append(value.decode("utf-8"))
        elif field_no == 2:
            node.outputs.append(value.decode("utf-8"))
        elif field_no == 3:
            node.name = value.decode("utf-8")
        elif field_no == 4:
            node.op_type = value.decode("utf-8")
        elif field_no == 5:
            key, attr_value = _parse_attribute(value)
            node.attrs[key] = attr_value
    return node


def _parse_value_info(buf: bytes) -> ParsedValueInfo:
    name = ""
    elem_type = FLOAT
    shape: List[Union[int, str]] = []
    for field_no, _, value in _iter_fields(buf):
        if field_no == 1:
            name = value.decode("utf-8")
        elif field_no == 2:
            for f2, _, tensor_type in _iter_fields(value):
                if f2 != 1:
                    continue
                for f3, _, v3 in _iter_fields(tensor_type):
                    if f3 == 1:
                        elem_type = v3
                    elif f3 == 2:
                        for f4, _, dim_buf in _iter_fields(v3):
                            if f4 != 1:
                                continue
                            entry: Union[int, str, None] = None
                            for f5, _, v5 in _iter_fields(dim_buf):
                                if f5 == 1:
                                    entry = _signed64(v5)
                                elif f5 == 2:
                                    entry = v5.decode("utf-8")
                            shape.append(entry if entry is not None else -1)
    return ParsedValueInfo(name, elem_type, shape)


def parse_model(blob: bytes) -> ParsedModel:
    graph_buf = None
    opset = OPSET_VERSION
    producer = ""
    try:
        for field_no, _, value in _iter_fields(blob):
            if field_no == 7:
                graph_buf = value
            elif field_no == 2:
                producer = value.decode("utf-8")
            elif field_no == 8:
                for f2, _, v2 in _iter_fields(value):
                    if f2 == 2:
                        opset = v2
        if graph_buf is None:
            raise GraphLoadError("model has no graph")
        graph_name = ""
        nodes: List[ParsedNode] = []
        initializers: Dict[str, np.ndarray] = {}
        inputs: List[ParsedValueInfo] = []
        outputs: List[ParsedValueInfo] = []
        for field_no, _, value in _iter_fields(graph_buf):
            if field_no == 1:
                nodes.append(_parse_node(value))
            elif field_no == 2:
                graph_name = value.decode("utf-8")
            elif field_no == 5:
                tensor = _parse_tensor(value)
                initializers[tensor.name] = tensor.array
            elif field_no == 11:
                inputs.append(_parse_value_info(value))
            elif field_no == 12:
                outputs.append(_parse_value_info(value))
        return ParsedModel(graph_name, nodes, initializers, inputs, outputs, opset, producer)
    except GraphLoadError:
        raise
    except Exception as exc:
        raise GraphLoadError(f"malformed exchange file: {exc}") from exc
