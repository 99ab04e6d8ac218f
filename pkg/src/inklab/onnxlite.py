"""Minimal ONNX (protobuf) reader, writer and numpy executor.

No ONNX runtime is required at inference time: the model file is decoded
with a small hand-rolled protobuf codec covering the message subset that
convolutional feature extractors actually use, and the graph is executed
with plain numpy. Files written here are standard ONNX and loadable by
stock tooling; files produced by stock exporters load here as long as
they stick to the supported op set:

    Conv, Relu, MaxPool, GlobalAveragePool, Flatten, Gemm, Reshape,
    Transpose, Add, Sub, Mul

Tensors are float32 NCHW throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

# --- protobuf wire primitives -------------------------------------------------

_WIRE_VARINT, _WIRE_64BIT, _WIRE_LEN, _WIRE_32BIT = 0, 1, 2, 5


def _varint(value: int) -> bytes:
    if value < 0:
        value += 1 << 64
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        out.append(bits | (0x80 if value else 0))
        if not value:
            return bytes(out)


def _key(field_no: int, wire: int) -> bytes:
    return _varint((field_no << 3) | wire)


def _len_field(field_no: int, payload: bytes) -> bytes:
    return _key(field_no, _WIRE_LEN) + _varint(len(payload)) + payload


def _str_field(field_no: int, text) -> bytes:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return _len_field(field_no, text)


def _int_field(field_no: int, value: int) -> bytes:
    return _key(field_no, _WIRE_VARINT) + _varint(value)


def _float_field(field_no: int, value: float) -> bytes:
    return _key(field_no, _WIRE_32BIT) + struct.pack("<f", value)


def _packed_varints(field_no: int, values) -> bytes:
    return _len_field(field_no, b"".join(_varint(int(v)) for v in values))


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = shift = 0
    while True:
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _parse_message(data: bytes) -> dict:
    """Decode one message level: field number -> list of (wire, payload)."""
    fields: dict[int, list] = {}
    pos = 0
    while pos < len(data):
        tag, pos = _read_varint(data, pos)
        field_no, wire = tag >> 3, tag & 7
        if wire == _WIRE_VARINT:
            value, pos = _read_varint(data, pos)
        elif wire == _WIRE_64BIT:
            value, pos = data[pos:pos + 8], pos + 8
        elif wire == _WIRE_LEN:
            size, pos = _read_varint(data, pos)
            value, pos = data[pos:pos + size], pos + size
        elif wire == _WIRE_32BIT:
            value, pos = data[pos:pos + 4], pos + 4
        else:
            raise ModelError(f"unsupported protobuf wire type {wire}")
        fields.setdefault(field_no, []).append((wire, value))
    return fields


def _ints_of(fields: dict, field_no: int) -> list[int]:
    out = []
    for wire, value in fields.get(field_no, []):
        if wire == _WIRE_VARINT:
            out.append(value)
        else:  # packed
            pos = 0
            while pos < len(value):
                v, pos = _read_varint(value, pos)
                out.append(v)
    return [v - (1 << 64) if v >= 1 << 63 else v for v in out]


def _first_bytes(fields: dict, field_no: int, default=b"") -> bytes:
    entries = fields.get(field_no)
    return entries[0][1] if entries else default


def _first_int(fields: dict, field_no: int, default=0) -> int:
    entries = fields.get(field_no)
    return entries[0][1] if entries else default


# --- model structure -----------------------------------------------------------

FLOAT32, INT64 = 1, 7  # TensorProto.DataType values

_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


@dataclass
class OnnxNode:
    op_type: str
    inputs: list
    outputs: list
    attrs: dict = field(default_factory=dict)
    name: str = ""


@dataclass
class OnnxGraph:
    nodes: list
    inputs: list          # [(name, shape)]
    outputs: list         # [(name, shape)]
    initializers: dict    # name -> ndarray


@dataclass
class OnnxModel:
    graph: OnnxGraph
    metadata: dict
    ir_version: int = 0
    producer: str = ""


# --- reading -------------------------------------------------------------------

def _decode_tensor(data: bytes) -> tuple[str, np.ndarray]:
    fields = _parse_message(data)
    dims = _ints_of(fields, 1)
    data_type = _first_int(fields, 2, FLOAT32)
    name = _first_bytes(fields, 8).decode("utf-8")
    raw = _first_bytes(fields, 9, None)
    if raw is not None:
        dtype = np.float32 if data_type == FLOAT32 else np.int64
        array = np.frombuffer(raw, dtype=dtype)
    elif data_type == FLOAT32:
        packed = _first_bytes(fields, 4, b"")
        array = np.frombuffer(packed, dtype="<f4")
    elif data_type == INT64:
        array = np.asarray(_ints_of(fields, 7), dtype=np.int64)
    else:
        raise ModelError(f"unsupported tensor data_type {data_type}")
    return name, array.reshape(dims if dims else (-1,)).copy()


def _decode_value_info(data: bytes) -> tuple[str, tuple]:
    fields = _parse_message(data)
    name = _first_bytes(fields, 1).decode("utf-8")
    shape: list[int] = []
    type_fields = _parse_message(_first_bytes(fields, 2))
    tensor_type = _parse_message(_first_bytes(type_fields, 1))
    shape_msg = _first_bytes(tensor_type, 2, None)
    if shape_msg is not None:
        for _, dim_bytes in _parse_message(shape_msg).get(1, []):
            dim_fields = _parse_message(dim_bytes)
            shape.append(_first_int(dim_fields, 1, 0))
    return name, tuple(shape)


def _decode_attribute(data: bytes) -> tuple[str, object]:
    fields = _parse_message(data)
    name = _first_bytes(fields, 1).decode("utf-8")
    if 3 in fields:
        return name, _ints_of(fields, 3)[0]
    if 2 in fields:
        return name, struct.unpack("<f", fields[2][0][1])[0]
    if 8 in fields:
        return name, _ints_of(fields, 8)
    if 4 in fields:
        return name, _first_bytes(fields, 4).decode("utf-8")
    if 5 in fields:
        return name, _decode_tensor(_first_bytes(fields, 5))[1]
    if 7 in fields:
        packed = _first_bytes(fields, 7, b"")
        return name, list(np.frombuffer(packed, dtype="<f4"))
    return name, None


def _decode_node(data: bytes) -> OnnxNode:
    fields = _parse_message(data)
    return OnnxNode(
        op_type=_first_bytes(fields, 4).decode("utf-8"),
        inputs=[v.decode("utf-8") for _, v in fields.get(1, [])],
        outputs=[v.decode("utf-8") for _, v in fields.get(2, [])],
        attrs=dict(_decode_attribute(v) for _, v in fields.get(5, [])),
        name=_first_bytes(fields, 3).decode("utf-8"),
    )


def read_model(data: bytes) -> OnnxModel:
    fields = _parse_message(data)
    graph_fields = _parse_message(_first_bytes(fields, 7))
    initializers = dict(
        _decode_tensor(v) for _, v in graph_fields.get(5, [])
    )
    inputs = [_decode_value_info(v) for _, v in graph_fields.get(11, [])]
    inputs = [(n, s) for n, s in inputs if n not in initializers]
    outputs = [_decode_value_info(v) for _, v in graph_fields.get(12, [])]
    nodes = [_decode_node(v) for _, v in graph_fields.get(1, [])]
    metadata = {}
    for _, entry in fields.get(14, []):
        entry_fields = _parse_message(entry)
        key = _first_bytes(entry_fields, 1).decode("utf-8")
        metadata[key] = _first_bytes(entry_fields, 2).decode("utf-8")
    return OnnxModel(
        graph=OnnxGraph(nodes, inputs, outputs, initializers),
        metadata=metadata,
        ir_version=_first_int(fields, 1),
        producer=_first_bytes(fields, 2).decode("utf-8"),
    )


# --- writing -------------------------------------------------------------------

def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array)
    if array.dtype == np.float32:
        data_type = FLOAT32
    elif array.dtype == np.int64:
        data_type = INT64
    else:
        raise ModelError(f"unsupported tensor dtype {array.dtype}")
    out = _packed_varints(1, array.shape)
    out += _int_field(2, data_type)
    out += _str_field(8, name)
    out += _len_field(9, array.tobytes())
    return out


def _encode_value_info(name: str, shape, elem_type: int = FLOAT32) -> bytes:
    dims = b"".join(
        _len_field(1, _int_field(1, int(d))) for d in shape
    )
    tensor_type = _int_field(1, elem_type) + _len_field(2, dims)
    return _str_field(1, name) + _len_field(2, _len_field(1, tensor_type))


def _encode_attribute(name: str, value) -> bytes:
    out = _str_field(1, name)
    if isinstance(value, bool):
        raise ModelError("boolean attributes are not a thing in this subset")
    if isinstance(value, int):
        out += _int_field(3, value) + _int_field(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _float_field(2, value) + _int_field(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _str_field(4, value) + _int_field(20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        out += _len_field(5, _encode_tensor(name + "_value", value))
        out += _int_field(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        out += _packed_varints(8, value) + _int_field(20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)):
        out += _len_field(7, b"".join(struct.pack("<f", float(v)) for v in value))
        out += _int_field(20, _ATTR_FLOATS)
    else:
        raise ModelError(f"unsupported attribute value {value!r}")
    return out


def _encode_node(node: OnnxNode) -> bytes:
    out = b"".join(_str_field(1, i) for i in node.inputs)
    out += b"".join(_str_field(2, o) for o in node.outputs)
    if node.name:
        out += _str_field(3, node.name)
    out += _str_field(4, node.op_type)
    out += b"".join(
        _len_field(5, _encode_attribute(k, v)) for k, v in sorted(node.attrs.items())
    )
    return out


def write_model(graph: OnnxGraph, metadata: dict | None = None,
                producer: str = "inklab", opset: int = 13,
                ir_version: int = 8) -> bytes:
    out = _int_field(1, ir_version)
    out += _str_field(2, producer)
    out += _len_field(7, _encode_graph(graph))
    out += _len_field(8, _int_field(2, opset))  # default-domain opset
    for key, value in sorted((metadata or {}).items()):
        out += _len_field(14, _str_field(1, key) + _str_field(2, value))
    return out


def _encode_graph(graph: OnnxGraph) -> bytes:
    out = b"".join(_len_field(1, _encode_node(n)) for n in graph.nodes)
    out += _str_field(2, "extractor")
    out += b"".join(
        _len_field(5, _encode_tensor(name, arr))
        for name, arr in graph.initializers.items()
    )
    out += b"".join(_len_field(11, _encode_value_info(n, s)) for n, s in graph.inputs)
    out += b"".join(_len_field(12, _encode_value_info(n, s)) for n, s in graph.outputs)
    return out


# --- numpy executor -------------------------------------------------------------

def _pair(value, default):
    if value is None:
        return (default, default)
    return tuple(int(v) for v in value[:2])


def _conv2d(x, w, b, pads, strides):
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = pads
    sh, sw = strides
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    n, c, oh, ow = win.shape[:4]
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * kh * kw)
    kernel = w.reshape(w.shape[0], -1)
    out = patches @ kernel.T
    if b is not None:
        out = out + b
    return out.transpose(0, 2, 1).reshape(n, w.shape[0], oh, ow)


def _maxpool2d(x, kernel, strides, pads):
    kh, kw = kernel
    sh, sw = strides
    ph, pw = pads
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)),
                   constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw].max(axis=(-2, -1))


class Executor:
    """Run a decoded graph on numpy float32 tensors (node order = topo order)."""

    def __init__(self, graph: OnnxGraph):
        self.graph = graph

    def run(self, feeds: dict) -> dict:
        values = dict(self.graph.initializers)
        values.update({k: np.asarray(v, dtype=np.float32) for k, v in feeds.items()})
        for node in self.graph.nodes:
            values[node.outputs[0]] = self._apply(node, values)
        return {name: values[name] for name, _ in self.graph.outputs}

    def _apply(self, node: OnnxNode, values: dict) -> np.ndarray:
        op = node.op_type
        ins = [values[name] for name in node.inputs if name]
        attrs = node.attrs
        if op == "Conv":
            if attrs.get("group", 1) != 1:
                raise ModelError("grouped Conv unsupported")
            if any(d != 1 for d in attrs.get("dilations", [1, 1])):
                raise ModelError("dilated Conv unsupported")
            pads = attrs.get("pads", [0, 0, 0, 0])
            if len(pads) == 4 and (pads[0] != pads[2] or pads[1] != pads[3]):
                raise ModelError("asymmetric Conv pads unsupported")
            bias = ins[2] if len(ins) > 2 else None
            return _conv2d(ins[0], ins[1], bias, _pair(pads, 0),
                           _pair(attrs.get("strides"), 1))
        if op == "Relu":
            return np.maximum(ins[0], 0)
        if op == "MaxPool":
            pads = attrs.get("pads", [0, 0, 0, 0])
            return _maxpool2d(ins[0], _pair(attrs["kernel_shape"], 1),
                              _pair(attrs.get("strides"), 1), _pair(pads, 0))
        if op == "GlobalAveragePool":
            return ins[0].mean(axis=(2, 3), keepdims=True)
        if op == "Flatten":
            axis = attrs.get("axis", 1)
            lead = int(np.prod(ins[0].shape[:axis])) if axis else 1
            return ins[0].reshape(lead, -1)
        if op == "Gemm":
            a, b = ins[0], ins[1]
            if attrs.get("transA", 0):
                a = a.T
            if attrs.get("transB", 0):
                b = b.T
            out = attrs.get("alpha", 1.0) * (a @ b)
            if len(ins) > 2:
                out = out + attrs.get("beta", 1.0) * ins[2]
            return out
        if op == "Reshape":
            shape = [int(v) for v in ins[1]]
            shape = [ins[0].shape[i] if s == 0 else s for i, s in enumerate(shape)]
            return ins[0].reshape(shape)
        if op == "Transpose":
            return ins[0].transpose(attrs["perm"])
        if op in ("Add", "Sub", "Mul"):
            fn = {"Add": np.add, "Sub": np.subtract, "Mul": np.multiply}[op]
            return fn(ins[0], ins[1])
        raise ModelError(f"unsupported op {op}")
