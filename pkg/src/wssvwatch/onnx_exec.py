"""Numpy execution of decoded model graphs.

Covers the operator subset small CNN classifiers need, on CPU, in float32.
Anything else raises CapabilityError naming the operator, including supported
operators used with attribute values outside what this runtime implements
(grouped conv, dilation, and so on).
"""

from __future__ import annotations

import numpy as np

from .errors import CapabilityError, ValidationError
from .onnx_pb import Graph


def _pair(values, default):
    if values is None:
        return default
    return tuple(int(v) for v in values)


def _conv(x, w, b, attrs):
    strides = _pair(attrs.get("strides"), (1, 1))
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    dilations = _pair(attrs.get("dilations"), (1, 1))
    group = int(attrs.get("group", 1))
    if dilations != (1, 1):
        raise CapabilityError("Conv with dilations != 1")
    if group != 1:
        raise CapabilityError("Conv with group != 1")
    if attrs.get("auto_pad", "NOTSET") not in ("NOTSET", ""):
        raise CapabilityError("Conv with auto_pad")
    n, c, h, wdt = x.shape
    m, wc, kh, kw = w.shape
    if wc != c:
        raise ValidationError(f"Conv channel mismatch: input {c}, weight {wc}")
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    sh, sw = strides
    oh = (h + pt + pb - kh) // sh + 1
    ow = (wdt + pl + pr - kw) // sw + 1
    out = np.zeros((n, m, oh, ow), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw]
            out += np.einsum("nchw,mc->nmhw", patch, w[:, :, i, j], dtype=np.float32)
    if b is not None:
        out += b.reshape(1, m, 1, 1)
    return out


def _pool_windows(x, attrs, reducer, pad_value):
    kernel = _pair(attrs.get("kernel_shape"), None)
    if kernel is None:
        raise ValidationError("pool node missing kernel_shape")
    strides = _pair(attrs.get("strides"), kernel)
    pads = _pair(attrs.get("pads"), (0, 0, 0, 0))
    kh, kw = kernel
    sh, sw = strides
    pt, pl, pb, pr = pads
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=pad_value)
    oh = (h + pt + pb - kh) // sh + 1
    ow = (w + pl + pr - kw) // sw + 1
    stacked = np.empty((kh * kw, n, c, oh, ow), dtype=np.float32)
    idx = 0
    for i in range(kh):
        for j in range(kw):
            stacked[idx] = xp[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw]
            idx += 1
    return reducer(stacked, axis=0)


def _gemm(a, b, c, attrs):
    alpha = np.float32(attrs.get("alpha", 1.0))
    beta = np.float32(attrs.get("beta", 1.0))
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    out = alpha * (a @ b)
    if c is not None:
        out = out + beta * c
    return out


def _reduce(x, fn, attrs, axes_input):
    if axes_input is not None:
        axes = tuple(int(v) for v in np.asarray(axes_input).ravel())
    elif attrs.get("axes") is not None:
        axes = tuple(int(v) for v in attrs["axes"])
    else:
        axes = None
    keepdims = bool(int(attrs.get("keepdims", 1)))
    return fn(x, axis=axes, keepdims=keepdims)


def _reshape(x, shape):
    target = [int(v) for v in np.asarray(shape).ravel()]
    resolved = []
    for i, d in enumerate(target):
        if d == 0:
            resolved.append(x.shape[i])
        else:
            resolved.append(d)
    return x.reshape(resolved)


def _stable_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.astype(np.float32)


def _clip(env, node, x):
    lo = hi = None
    if len(node.inputs) > 1 and node.inputs[1]:
        lo = float(np.asarray(env[node.inputs[1]]).ravel()[0])
    elif node.attrs.get("min") is not None:
        lo = float(node.attrs["min"])
    if len(node.inputs) > 2 and node.inputs[2]:
        hi = float(np.asarray(env[node.inputs[2]]).ravel()[0])
    elif node.attrs.get("max") is not None:
        hi = float(node.attrs["max"])
    return np.clip(x, lo, hi)


SUPPORTED_OPS = frozenset(
    {
        "Add",
        "Sub",
        "Mul",
        "Div",
        "Relu",
        "Sigmoid",
        "Conv",
        "MaxPool",
        "AveragePool",
        "GlobalAveragePool",
        "MatMul",
        "Gemm",
        "Flatten",
        "Reshape",
        "Transpose",
        "ReduceMean",
        "ReduceSum",
        "Identity",
        "Constant",
        "Clip",
        "Concat",
        "Squeeze",
        "Unsqueeze",
    }
)


def unsupported_ops(graph: Graph) -> list[str]:
    """Operators in graph order that this runtime cannot execute."""
    return sorted({n.op_type for n in graph.nodes} - SUPPORTED_OPS)


def run_graph(graph: Graph, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute the graph on the given inputs; returns the output tensors.

    Nodes are evaluated in file order (graphs are topologically sorted by
    construction). All floating math is float32.
    """
    env: dict[str, np.ndarray] = {}
    for init in graph.initializers:
        env[init.name] = init.array
    for name, value in feeds.items():
        env[name] = np.asarray(value, dtype=np.float32)

    for node in graph.nodes:
        op = node.op_type
        if op not in SUPPORTED_OPS:
            raise CapabilityError(op)
        try:
            args = [env[name] for name in node.inputs if name]
        except KeyError as exc:
            raise ValidationError(f"node {node.name!r} reads undefined tensor {exc}") from exc

        if op == "Add":
            result = args[0] + args[1]
        elif op == "Sub":
            result = args[0] - args[1]
        elif op == "Mul":
            result = args[0] * args[1]
        elif op == "Div":
            result = args[0] / args[1]
        elif op == "Relu":
            result = np.maximum(args[0], 0)
        elif op == "Sigmoid":
            result = _stable_sigmoid(args[0])
        elif op == "Conv":
            bias = args[2] if len(args) > 2 else None
            result = _conv(args[0], args[1], bias, node.attrs)
        elif op == "MaxPool":
            result = _pool_windows(args[0], node.attrs, np.max, -np.inf)
        elif op == "AveragePool":
            if _pair(node.attrs.get("pads"), (0, 0, 0, 0)) != (0, 0, 0, 0):
                raise CapabilityError("AveragePool with pads")
            result = _pool_windows(args[0], node.attrs, np.mean, 0.0)
        elif op == "GlobalAveragePool":
            result = args[0].mean(axis=(2, 3), keepdims=True)
        elif op == "MatMul":
            result = args[0] @ args[1]
        elif op == "Gemm":
            result = _gemm(args[0], args[1], args[2] if len(args) > 2 else None, node.attrs)
        elif op == "Flatten":
            axis = int(node.attrs.get("axis", 1))
            shape = args[0].shape
            lead = int(np.prod(shape[:axis])) if axis else 1
            result = args[0].reshape(lead, -1)
        elif op == "Reshape":
            result = _reshape(args[0], args[1])
        elif op == "Transpose":
            perm = node.attrs.get("perm")
            result = np.transpose(args[0], perm)
        elif op == "ReduceMean":
            axes_in = args[1] if len(args) > 1 else None
            result = _reduce(args[0], np.mean, node.attrs, axes_in)
        elif op == "ReduceSum":
            axes_in = args[1] if len(args) > 1 else None
            result = _reduce(args[0], np.sum, node.attrs, axes_in)
        elif op == "Identity":
            result = args[0]
        elif op == "Constant":
            value = node.attrs.get("value")
            if value is None:
                raise CapabilityError("Constant without tensor value")
            result = value
        elif op == "Clip":
            result = _clip(env, node, args[0])
        elif op == "Concat":
            axis = int(node.attrs.get("axis", 0))
            result = np.concatenate(args, axis=axis)
        elif op == "Squeeze":
            axes_in = args[1] if len(args) > 1 else node.attrs.get("axes")
            if axes_in is None:
                result = np.squeeze(args[0])
            else:
                axes = tuple(int(v) for v in np.asarray(axes_in).ravel())
                result = np.squeeze(args[0], axis=axes)
        elif op == "Unsqueeze":
            axes_in = args[1] if len(args) > 1 else node.attrs.get("axes")
            axes = tuple(int(v) for v in np.asarray(axes_in).ravel())
            result = args[0]
            for ax in sorted(axes):
                result = np.expand_dims(result, axis=ax)
        else:  # pragma: no cover - guarded by SUPPORTED_OPS
            raise CapabilityError(op)

        if isinstance(result, np.ndarray) and result.dtype == np.float64:
            result = result.astype(np.float32)
        env[node.outputs[0]] = result

    missing = [o.name for o in graph.outputs if o.name not in env]
    if missing:
        raise ValidationError(f"graph outputs never produced: {missing}")
    return {o.name: env[o.name] for o in graph.outputs}
