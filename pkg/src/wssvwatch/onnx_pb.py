"""Minimal ONNX protobuf reader/writer.

Implements the protobuf wire format for the message subset ONNX model files
use (ModelProto, GraphProto, NodeProto, TensorProto, ValueInfoProto, and the
type/shape messages), with no protobuf library dependency. Unknown fields are
skipped on read, so files produced by mainstream exporters parse as long as
they stick to inline tensor data.

Only float32 and int64 tensors are supported, which covers CNN classifier
graphs. Malformed input raises ValueError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

# TensorProto.DataType
FLOAT = 1
INT64 = 7

_DTYPES = {FLOAT: np.float32, INT64: np.int64}
_DTYPE_CODES = {np.dtype(np.float32): FLOAT, np.dtype(np.int64): INT64}

_U64_MASK = (1 << 64) - 1


def _uv(value: int) -> bytes:
    """Encode an unsigned varint; negative ints use 64-bit two's complement."""
    if value < 0:
        value &= _U64_MASK
    out = bytearray()
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def _read_uv(data, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise ValueError("truncated varint")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise ValueError("varint too long")


def _s64(value: int) -> int:
    return value - (1 << 64) if value >= (1 << 63) else value


def _tag(field_no: int, wire_type: int) -> bytes:
    return _uv((field_no << 3) | wire_type)


def _varint_field(field_no: int, value: int) -> bytes:
    return _tag(field_no, 0) + _uv(value)


def _bytes_field(field_no: int, payload: bytes) -> bytes:
    return _tag(field_no, 2) + _uv(len(payload)) + payload


def _string_field(field_no: int, text: str) -> bytes:
    return _bytes_field(field_no, text.encode("utf-8"))


def _float_field(field_no: int, value: float) -> bytes:
    return _tag(field_no, 5) + struct.pack("<f", value)


def _fields(data):
    """Iterate (field_no, wire_type, value) over an encoded message."""
    pos = 0
    n = len(data)
    while pos < n:
        key, pos = _read_uv(data, pos)
        field_no, wire_type = key >> 3, key & 7
        if wire_type == 0:
            value, pos = _read_uv(data, pos)
        elif wire_type == 1:
            if pos + 8 > n:
                raise ValueError("truncated fixed64")
            value = bytes(data[pos : pos + 8])
            pos += 8
        elif wire_type == 2:
            length, pos = _read_uv(data, pos)
            if pos + length > n:
                raise ValueError("truncated length-delimited field")
            value = bytes(data[pos : pos + length])
            pos += length
        elif wire_type == 5:
            if pos + 4 > n:
                raise ValueError("truncated fixed32")
            value = bytes(data[pos : pos + 4])
            pos += 4
        else:
            raise ValueError(f"unsupported wire type {wire_type}")
        yield field_no, wire_type, value


@dataclass
class Tensor:
    """A named constant tensor (graph initializer or attribute value)."""

    name: str
    array: np.ndarray

    def encode(self) -> bytes:
        arr = np.ascontiguousarray(self.array)
        if arr.dtype not in _DTYPE_CODES:
            raise ValueError(f"unsupported tensor dtype {arr.dtype}")
        out = bytearray()
        for d in arr.shape:
            out += _varint_field(1, d)
        out += _varint_field(2, _DTYPE_CODES[arr.dtype])
        out += _string_field(8, self.name)
        out += _bytes_field(9, arr.tobytes())
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "Tensor":
        dims: list[int] = []
        data_type = FLOAT
        name = ""
        raw = None
        float_vals: list[float] = []
        int_vals: list[int] = []
        for field_no, wire_type, value in _fields(data):
            if field_no == 1:
                if wire_type == 0:
                    dims.append(_s64(value))
                else:  # packed
                    pos = 0
                    while pos < len(value):
                        v, pos = _read_uv(value, pos)
                        dims.append(_s64(v))
            elif field_no == 2:
                data_type = value
            elif field_no == 8:
                name = value.decode("utf-8")
            elif field_no == 9:
                raw = value
            elif field_no == 4:  # float_data
                if wire_type == 5:
                    float_vals.append(struct.unpack("<f", value)[0])
                else:
                    float_vals.extend(
                        struct.unpack(f"<{len(value) // 4}f", value)
                    )
            elif field_no == 7:  # int64_data
                if wire_type == 0:
                    int_vals.append(_s64(value))
                else:
                    pos = 0
                    while pos < len(value):
                        v, pos = _read_uv(value, pos)
                        int_vals.append(_s64(v))
        if data_type not in _DTYPES:
            raise ValueError(f"unsupported tensor data type {data_type}")
        dtype = _DTYPES[data_type]
        if raw is not None:
            arr = np.frombuffer(raw, dtype=dtype).copy()
        elif data_type == FLOAT and float_vals:
            arr = np.asarray(float_vals, dtype=dtype)
        elif data_type == INT64 and int_vals:
            arr = np.asarray(int_vals, dtype=dtype)
        else:
            arr = np.zeros(0, dtype=dtype)
        expected = int(np.prod(dims)) if dims else arr.size
        if arr.size != expected:
            raise ValueError(f"tensor {name!r}: {arr.size} values for dims {dims}")
        return cls(name=name, array=arr.reshape(dims))


# AttributeProto.AttributeType
_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def _encode_attribute(name: str, value) -> bytes:
    out = bytearray(_string_field(1, name))
    if isinstance(value, bool):
        out += _varint_field(3, int(value)) + _varint_field(20, _ATTR_INT)
    elif isinstance(value, int):
        out += _varint_field(3, value) + _varint_field(20, _ATTR_INT)
    elif isinstance(value, float):
        out += _float_field(2, value) + _varint_field(20, _ATTR_FLOAT)
    elif isinstance(value, str):
        out += _bytes_field(4, value.encode("utf-8")) + _varint_field(20, _ATTR_STRING)
    elif isinstance(value, np.ndarray):
        out += _bytes_field(5, Tensor(name="", array=value).encode())
        out += _varint_field(20, _ATTR_TENSOR)
    elif isinstance(value, (list, tuple)):
        if value and all(isinstance(v, float) for v in value):
            for v in value:
                out += _float_field(7, v)
            out += _varint_field(20, _ATTR_FLOATS)
        else:
            for v in value:
                out += _varint_field(8, int(v))
            out += _varint_field(20, _ATTR_INTS)
    else:
        raise ValueError(f"unsupported attribute value for {name!r}: {type(value)}")
    return _bytes_field(5, bytes(out))


def _decode_attribute(data: bytes) -> tuple[str, object]:
    name = ""
    f_val = i_val = s_val = t_val = None
    floats: list[float] = []
    ints: list[int] = []
    atype = 0
    for field_no, wire_type, value in _fields(data):
        if field_no == 1:
            name = value.decode("utf-8")
        elif field_no == 2:
            f_val = struct.unpack("<f", value)[0]
        elif field_no == 3:
            i_val = _s64(value)
        elif field_no == 4:
            s_val = value.decode("utf-8")
        elif field_no == 5:
            t_val = Tensor.decode(value).array
        elif field_no == 7:
            if wire_type == 5:
                floats.append(struct.unpack("<f", value)[0])
            else:
                floats.extend(struct.unpack(f"<{len(value) // 4}f", value))
        elif field_no == 8:
            if wire_type == 0:
                ints.append(_s64(value))
            else:
                pos = 0
                while pos < len(value):
                    v, pos = _read_uv(value, pos)
                    ints.append(_s64(v))
        elif field_no == 20:
            atype = value
    if atype == _ATTR_INT or (atype == 0 and i_val is not None):
        return name, i_val
    if atype == _ATTR_FLOAT or (atype == 0 and f_val is not None):
        return name, f_val
    if atype == _ATTR_STRING or (atype == 0 and s_val is not None):
        return name, s_val
    if atype == _ATTR_TENSOR or (atype == 0 and t_val is not None):
        return name, t_val
    if atype == _ATTR_FLOATS:
        return name, floats
    return name, ints


@dataclass
class Node:
    """One graph operation."""

    op_type: str
    inputs: list[str]
    outputs: list[str]
    name: str = ""
    attrs: dict = field(default_factory=dict)

    def encode(self) -> bytes:
        out = bytearray()
        for inp in self.inputs:
            out += _string_field(1, inp)
        for outp in self.outputs:
            out += _string_field(2, outp)
        out += _string_field(3, self.name)
        out += _string_field(4, self.op_type)
        for attr_name in sorted(self.attrs):
            out += _encode_attribute(attr_name, self.attrs[attr_name])
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "Node":
        node = cls(op_type="", inputs=[], outputs=[])
        for field_no, _wt, value in _fields(data):
            if field_no == 1:
                node.inputs.append(value.decode("utf-8"))
            elif field_no == 2:
                node.outputs.append(value.decode("utf-8"))
            elif field_no == 3:
                node.name = value.decode("utf-8")
            elif field_no == 4:
                node.op_type = value.decode("utf-8")
            elif field_no == 5:
                attr_name, attr_value = _decode_attribute(value)
                node.attrs[attr_name] = attr_value
        return node


@dataclass
class ValueInfo:
    """A graph input/output declaration: name, element type, symbolic shape."""

    name: str
    dims: tuple  # ints for fixed dims, str for symbolic, None for unknown
    elem_type: int = FLOAT

    def encode(self) -> bytes:
        shape = bytearray()
        for d in self.dims:
            if isinstance(d, int):
                dim = _varint_field(1, d)
            elif isinstance(d, str):
                dim = _string_field(2, d)
            else:
                dim = b""
            shape += _bytes_field(1, bytes(dim))
        tensor_type = _varint_field(1, self.elem_type) + _bytes_field(2, bytes(shape))
        type_proto = _bytes_field(1, tensor_type)
        return _string_field(1, self.name) + _bytes_field(2, type_proto)

    @classmethod
    def decode(cls, data: bytes) -> "ValueInfo":
        name = ""
        dims: list = []
        elem_type = FLOAT
        for field_no, _wt, value in _fields(data):
            if field_no == 1:
                name = value.decode("utf-8")
            elif field_no == 2:
                for f2, _w2, v2 in _fields(value):
                    if f2 != 1:  # tensor_type only
                        continue
                    for f3, _w3, v3 in _fields(v2):
                        if f3 == 1:
                            elem_type = v3
                        elif f3 == 2:
                            for f4, _w4, v4 in _fields(v3):
                                if f4 == 1:
                                    dim_value = None
                                    for f5, _w5, v5 in _fields(v4):
                                        if f5 == 1:
                                            dim_value = _s64(v5)
                                        elif f5 == 2:
                                            dim_value = v5.decode("utf-8")
                                    dims.append(dim_value)
        return cls(name=name, dims=tuple(dims), elem_type=elem_type)


@dataclass
class Graph:
    name: str
    nodes: list[Node]
    inputs: list[ValueInfo]
    outputs: list[ValueInfo]
    initializers: list[Tensor] = field(default_factory=list)

    def encode(self) -> bytes:
        out = bytearray()
        for node in self.nodes:
            out += _bytes_field(1, node.encode())
        out += _string_field(2, self.name)
        for init in self.initializers:
            out += _bytes_field(5, init.encode())
        for vi in self.inputs:
            out += _bytes_field(11, vi.encode())
        for vi in self.outputs:
            out += _bytes_field(12, vi.encode())
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "Graph":
        graph = cls(name="", nodes=[], inputs=[], outputs=[])
        for field_no, _wt, value in _fields(data):
            if field_no == 1:
                graph.nodes.append(Node.decode(value))
            elif field_no == 2:
                graph.name = value.decode("utf-8")
            elif field_no == 5:
                graph.initializers.append(Tensor.decode(value))
            elif field_no == 11:
                graph.inputs.append(ValueInfo.decode(value))
            elif field_no == 12:
                graph.outputs.append(ValueInfo.decode(value))
        return graph


@dataclass
class Model:
    graph: Graph
    ir_version: int = 8
    opset_version: int = 13
    producer_name: str = "wssvwatch"
    producer_version: str = "0.1.0"

    def encode(self) -> bytes:
        out = bytearray()
        out += _varint_field(1, self.ir_version)
        out += _string_field(2, self.producer_name)
        out += _string_field(3, self.producer_version)
        out += _bytes_field(7, self.graph.encode())
        opset = _string_field(1, "") + _varint_field(2, self.opset_version)
        out += _bytes_field(8, opset)
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "Model":
        graph = None
        ir_version = 0
        opset_version = 0
        producer_name = ""
        producer_version = ""
        for field_no, _wt, value in _fields(data):
            if field_no == 1:
                ir_version = value
            elif field_no == 2:
                producer_name = value.decode("utf-8")
            elif field_no == 3:
                producer_version = value.decode("utf-8")
            elif field_no == 7:
                graph = Graph.decode(value)
            elif field_no == 8:
                for f2, _w2, v2 in _fields(value):
                    if f2 == 2:
                        opset_version = max(opset_version, _s64(v2))
        if graph is None:
            raise ValueError("model has no graph")
        return cls(
            graph=graph,
            ir_version=ir_version,
            opset_version=opset_version,
            producer_name=producer_name,
            producer_version=producer_version,
        )


def encode_model(model: Model) -> bytes:
    return model.encode()


def decode_model(data: bytes) -> Model:
    if not data:
        raise ValueError("empty model bytes")
    return Model.decode(data)
