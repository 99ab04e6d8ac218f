"""Minimal ONNX protobuf writer (exporter side).

Encodes exactly the message subset a feed-forward convolutional graph
needs: ModelProto, GraphProto, NodeProto, AttributeProto, TensorProto,
ValueInfoProto and metadata_props. Output is standard ONNX wire format.
"""

from __future__ import annotations

import struct

import numpy as np

FLOAT32, INT64 = 1, 7
_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


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
    return _key(field_no, 2) + _varint(len(payload)) + payload


def _str_field(field_no: int, text) -> bytes:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return _len_field(field_no, text)


def _int_field(field_no: int, value: int) -> bytes:
    return _key(field_no, 0) + _varint(value)


def tensor(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array)
    dtype = {np.dtype("float32"): FLOAT32, np.dtype("int64"): INT64}[array.dtype]
    out = _len_field(1, b"".join(_varint(d) for d in array.shape))
    out += _int_field(2, dtype)
    out += _str_field(8, name)
    out += _len_field(9, array.tobytes())
    return out


def value_info(name: str, shape, elem_type: int = FLOAT32) -> bytes:
    dims = b"".join(_len_field(1, _int_field(1, int(d))) for d in shape)
    tensor_type = _int_field(1, elem_type) + _len_field(2, dims)
    return _str_field(1, name) + _len_field(2, _len_field(1, tensor_type))


def _attribute(name: str, value) -> bytes:
    out = _str_field(1, name)
    if isinstance(value, int):
        out += _int_field(3, value) + _int_field(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _key(2, 5) + struct.pack("<f", value) + _int_field(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _str_field(4, value) + _int_field(20, _ATTR_STRING)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        out += _len_field(8, b"".join(_varint(v) for v in value))
        out += _int_field(20, _ATTR_INTS)
    else:
        raise TypeError(f"unsupported attribute {name}={value!r}")
    return out


def node(op_type: str, inputs, outputs, name: str = "", **attrs) -> bytes:
    out = b"".join(_str_field(1, i) for i in inputs)
    out += b"".join(_str_field(2, o) for o in outputs)
    if name:
        out += _str_field(3, name)
    out += _str_field(4, op_type)
    out += b"".join(_len_field(5, _attribute(k, v))
                    for k, v in sorted(attrs.items()))
    return out


def model(nodes, inputs, outputs, initializers, metadata,
          producer: str = "backbone-export", opset: int = 13,
          ir_version: int = 8) -> bytes:
    graph = b"".join(_len_field(1, n) for n in nodes)
    graph += _str_field(2, "conv_base")
    graph += b"".join(_len_field(5, t) for t in initializers)
    graph += b"".join(_len_field(11, value_info(n, s)) for n, s in inputs)
    graph += b"".join(_len_field(12, value_info(n, s)) for n, s in outputs)

    out = _int_field(1, ir_version)
    out += _str_field(2, producer)
    out += _len_field(7, graph)
    out += _len_field(8, _int_field(2, opset))
    for key, value in sorted(metadata.items()):
        out += _len_field(14, _str_field(1, key) + _str_field(2, value))
    return out
