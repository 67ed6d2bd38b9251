"""Synthetic fixed-weight model bundles.

These tiny networks let the platform be exercised end to end (inference,
saliency, benchmarking, the HTTP service) without trained weights: a
constant-logit model, a model that fires on a bright rectangular region, and
a small conv net. All weights are fixed constants, so every output is
reproducible.
"""

from __future__ import annotations

import numpy as np

from .inference import ModelBundle, ModelMetadata, make_bundle
from .onnx_pb import Graph, Model, Node, Tensor, ValueInfo, encode_model


def _bundle(graph_name: str, nodes, initializers, metadata: ModelMetadata) -> ModelBundle:
    side = metadata.input_side
    graph = Graph(
        name=graph_name,
        nodes=nodes,
        inputs=[ValueInfo(name=metadata.input_name, dims=("N", 3, side, side))],
        outputs=[ValueInfo(name="logit", dims=("N",))],
        initializers=initializers,
    )
    blob = encode_model(Model(graph=graph))
    return make_bundle(metadata, blob)


def constant_model(side: int = 224, logit: float = 0.0) -> ModelBundle:
    """A model whose output never depends on the input."""
    nodes = [
        Node("Mul", ["image", "zero"], ["masked"]),
        Node("ReduceSum", ["masked"], ["total"], attrs={"keepdims": 0}),
        Node("Add", ["total", "bias"], ["logit"]),
    ]
    inits = [
        Tensor("zero", np.zeros((1,), dtype=np.float32)),
        Tensor("bias", np.asarray(logit, dtype=np.float32)),
    ]
    metadata = ModelMetadata(
        name="toy-constant",
        version="1.0",
        input_name="image",
        input_side=side,
    )
    return _bundle("constant", nodes, inits, metadata)


def region_sum_model(
    side: int = 224,
    region: tuple[int, int, int, int] = (0, 0, 32, 32),
    weight: float = 0.002,
    bias: float = -3.0,
) -> ModelBundle:
    """A model that fires when the given (left, top, w, h) region is bright.

    logit = weight * sum(input over the region, all channels) + bias. With the
    defaults, an all-bright 32x32 region in [0,1]-normalized input gives a
    logit near +3.1 and anything outside the region contributes nothing.
    """
    left, top, w, h = region
    mask = np.zeros((3, side, side), dtype=np.float32)
    mask[:, top : top + h, left : left + w] = 1.0
    nodes = [
        Node("Mul", ["image", "mask"], ["masked"]),
        Node("ReduceSum", ["masked"], ["total"], attrs={"keepdims": 0}),
        Node("Mul", ["total", "weight"], ["scaled"]),
        Node("Add", ["scaled", "bias"], ["logit"]),
    ]
    inits = [
        Tensor("mask", mask),
        Tensor("weight", np.asarray(weight, dtype=np.float32)),
        Tensor("bias", np.asarray(bias, dtype=np.float32)),
    ]
    metadata = ModelMetadata(
        name="toy-region",
        version="1.0",
        input_name="image",
        input_side=side,
    )
    return _bundle("region_sum", nodes, inits, metadata)


def small_conv_model(side: int = 16) -> ModelBundle:
    """A minimal conv net: Conv3x3 -> Relu -> GlobalAveragePool -> Gemm."""
    rng = np.random.default_rng(7)
    conv_w = rng.normal(0.0, 0.2, size=(4, 3, 3, 3)).astype(np.float32)
    conv_b = rng.normal(0.0, 0.1, size=(4,)).astype(np.float32)
    fc_w = rng.normal(0.0, 0.5, size=(4, 1)).astype(np.float32)
    fc_b = np.asarray([0.1], dtype=np.float32)
    nodes = [
        Node("Conv", ["image", "conv_w", "conv_b"], ["conv_out"],
             attrs={"kernel_shape": [3, 3], "pads": [1, 1, 1, 1], "strides": [1, 1]}),
        Node("Relu", ["conv_out"], ["act"]),
        Node("GlobalAveragePool", ["act"], ["pooled"]),
        Node("Flatten", ["pooled"], ["flat"], attrs={"axis": 1}),
        Node("Gemm", ["flat", "fc_w", "fc_b"], ["logit"]),
    ]
    inits = [
        Tensor("conv_w", conv_w),
        Tensor("conv_b", conv_b),
        Tensor("fc_w", fc_w),
        Tensor("fc_b", fc_b),
    ]
    metadata = ModelMetadata(
        name="toy-conv",
        version="1.0",
        input_name="image",
        input_side=side,
    )
    return _bundle("small_conv", nodes, inits, metadata)


def probability_region_model(side: int = 224, **kwargs) -> ModelBundle:
    """region_sum_model with the sigmoid baked into the graph."""
    base = region_sum_model(side=side, **kwargs)
    model = Model.decode(base.model_blob)
    graph = model.graph
    last = graph.nodes[-1]
    last.outputs = ["pre_sigmoid"]
    graph.nodes.append(Node("Sigmoid", ["pre_sigmoid"], ["logit"]))
    metadata = ModelMetadata(
        name="toy-region-prob",
        version="1.0",
        input_name="image",
        input_side=side,
        output_kind="probability",
    )
    return make_bundle(metadata, encode_model(model))


def unsupported_op_model(side: int = 16) -> ModelBundle:
    """A model containing an operator outside the runtime's supported set."""
    nodes = [Node("Einsum", ["image"], ["logit"], attrs={"equation": "nchw->n"})]
    metadata = ModelMetadata(
        name="toy-unsupported",
        version="1.0",
        input_name="image",
        input_side=side,
    )
    return _bundle("unsupported", nodes, [], metadata)
