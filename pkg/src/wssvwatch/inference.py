"""Model bundle loading and sigmoid-scored binary prediction.

A bundle is a directory holding the serialized network in the interchange
format (model.onnx), a metadata.json describing its input contract, and a
sha-256 checksum sidecar. Loading validates integrity, declared shapes, and
operator support; a loaded handle answers deterministic CPU forward passes.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import tarfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import onnx_exec, onnx_pb
from .errors import (
    CapabilityError,
    ConfigurationError,
    IntegrityError,
    ModelContractError,
    NumericError,
    ValidationError,
)
from .imaging import ModelInput

MODEL_FILE = "model.onnx"
METADATA_FILE = "metadata.json"
CHECKSUM_FILE = "model.onnx.sha256"

CLASS_MAP = {0: "healthy", 1: "wssv"}


@dataclass
class ModelMetadata:
    """Input contract, decision rule, and training provenance for a bundle."""

    name: str
    version: str
    input_name: str
    input_side: int = 224
    channel_layout: str = "planar"  # tensor layout the network expects
    scale: tuple[float, float, float] = (1.0 / 255.0,) * 3
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    output_kind: str = "logit"  # or "probability"
    decision_threshold: float = 0.5
    class_map: dict = field(default_factory=lambda: dict(CLASS_MAP))
    provenance: dict | None = None  # epochs, batch_size, learning_rate, optimizer, loss

    def __post_init__(self):
        if not (0.0 < self.decision_threshold < 1.0):
            raise ValidationError(
                "decision_threshold must be strictly inside (0, 1)",
                field="decision_threshold",
            )
        if self.input_side < 8:
            raise ValidationError("input_side must be >= 8", field="input_side")
        if self.channel_layout not in ("planar", "interleaved"):
            raise ValidationError(
                f"unknown channel_layout {self.channel_layout!r}", field="channel_layout"
            )
        if self.output_kind not in ("logit", "probability"):
            raise ValidationError(
                f"unknown output_kind {self.output_kind!r}", field="output_kind"
            )
        if {int(k): v for k, v in self.class_map.items()} != CLASS_MAP:
            raise ValidationError(
                "class_map must be exactly {0: 'healthy', 1: 'wssv'}", field="class_map"
            )
        self.class_map = dict(CLASS_MAP)

    def to_json(self) -> dict:
        obj = {
            "name": self.name,
            "version": self.version,
            "input_name": self.input_name,
            "input_side": self.input_side,
            "channel_layout": self.channel_layout,
            "normalization": {"scale": list(self.scale), "offset": list(self.offset)},
            "output_kind": self.output_kind,
            "decision_threshold": self.decision_threshold,
            "class_map": {str(k): v for k, v in self.class_map.items()},
        }
        if self.provenance is not None:
            obj["provenance"] = dict(self.provenance)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ModelMetadata":
        try:
            norm = obj.get("normalization", {})
            return cls(
                name=obj["name"],
                version=obj["version"],
                input_name=obj["input_name"],
                input_side=int(obj.get("input_side", 224)),
                channel_layout=obj.get("channel_layout", "planar"),
                scale=tuple(norm.get("scale", (1.0 / 255.0,) * 3)),
                offset=tuple(norm.get("offset", (0.0, 0.0, 0.0))),
                output_kind=obj.get("output_kind", "logit"),
                decision_threshold=float(obj.get("decision_threshold", 0.5)),
                class_map={int(k): v for k, v in obj.get("class_map", CLASS_MAP).items()},
                provenance=obj.get("provenance"),
            )
        except KeyError as exc:
            raise ValidationError(f"metadata missing field {exc}") from exc


@dataclass
class ModelBundle:
    """Metadata plus the serialized network and its content checksum."""

    metadata: ModelMetadata
    model_blob: bytes
    checksum: str

    def verify(self) -> None:
        actual = hashlib.sha256(self.model_blob).hexdigest()
        if actual != self.checksum:
            raise IntegrityError(
                f"model blob checksum {actual[:12]}... does not match recorded "
                f"{self.checksum[:12]}..."
            )

    @property
    def model_id(self) -> str:
        return f"{self.metadata.name}@{self.checksum[:12]}"


def make_bundle(metadata: ModelMetadata, model_blob: bytes) -> ModelBundle:
    return ModelBundle(
        metadata=metadata,
        model_blob=model_blob,
        checksum=hashlib.sha256(model_blob).hexdigest(),
    )


def write_bundle(bundle: ModelBundle, directory) -> Path:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    (path / MODEL_FILE).write_bytes(bundle.model_blob)
    (path / CHECKSUM_FILE).write_text(bundle.checksum + "\n", encoding="utf-8")
    with open(path / METADATA_FILE, "w", encoding="utf-8") as fh:
        json.dump(bundle.metadata.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_bundle(directory) -> ModelBundle:
    path = Path(directory)
    model_path = path / MODEL_FILE
    if not model_path.exists():
        raise ValidationError(f"no {MODEL_FILE} in {path}")
    blob = model_path.read_bytes()
    with open(path / METADATA_FILE, encoding="utf-8") as fh:
        metadata = ModelMetadata.from_json(json.load(fh))
    checksum_path = path / CHECKSUM_FILE
    if checksum_path.exists():
        checksum = checksum_path.read_text(encoding="utf-8").strip()
    else:
        checksum = hashlib.sha256(blob).hexdigest()
    return ModelBundle(metadata=metadata, model_blob=blob, checksum=checksum)


def bundle_to_tar(bundle: ModelBundle) -> bytes:
    """Pack a bundle into a deterministic tar stream (upload wire format)."""
    buf = io.BytesIO()
    entries = [
        (METADATA_FILE, (json.dumps(bundle.metadata.to_json(), indent=2, sort_keys=True) + "\n").encode()),
        (MODEL_FILE, bundle.model_blob),
        (CHECKSUM_FILE, (bundle.checksum + "\n").encode()),
    ]
    with tarfile.open(fileobj=buf, mode="w") as tar:
        for name, data in sorted(entries):
            info = tarfile.TarInfo(name=name)
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            info.mode = 0o644
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def bundle_from_tar(data: bytes) -> ModelBundle:
    try:
        with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tar:
            members = {Path(m.name).name: m for m in tar.getmembers() if m.isfile()}
            if MODEL_FILE not in members or METADATA_FILE not in members:
                raise ValidationError(
                    f"bundle archive must contain {MODEL_FILE} and {METADATA_FILE}"
                )
            blob = tar.extractfile(members[MODEL_FILE]).read()
            metadata = ModelMetadata.from_json(
                json.loads(tar.extractfile(members[METADATA_FILE]).read())
            )
            if CHECKSUM_FILE in members:
                checksum = tar.extractfile(members[CHECKSUM_FILE]).read().decode().strip()
            else:
                checksum = hashlib.sha256(blob).hexdigest()
    except tarfile.TarError as exc:
        raise ValidationError(f"not a valid bundle archive: {exc}") from exc
    return ModelBundle(metadata=metadata, model_blob=blob, checksum=checksum)


@dataclass
class Prediction:
    """One scored decision: sigmoid score, thresholded class, call latency."""

    score: float
    decision: str
    model_id: str
    latency_ms: float
    input_provenance: str = "ad-hoc"

    def to_json(self) -> dict:
        return {
            "score": self.score,
            "decision": self.decision,
            "model_id": self.model_id,
            "latency_ms": self.latency_ms,
            "input_provenance": self.input_provenance,
        }


class ModelHandle:
    """A validated, loaded model answering forward passes.

    Safe for concurrent readers: forward passes are serialized internally so
    concurrent predicts observe the same scores as sequential execution.
    """

    def __init__(self, metadata: ModelMetadata, graph: onnx_pb.Graph, model_id: str):
        self.metadata = metadata
        self.graph = graph
        self.model_id = model_id
        self._lock = threading.Lock()
        self._benchmark_owner = None
        self._graph_layout = _graph_input_layout(graph, metadata)

    @property
    def input_side(self) -> int:
        return self.metadata.input_side

    def reserve_for_benchmark(self) -> object:
        """Mark the handle busy and return the token that retains access."""
        with self._lock:
            if self._benchmark_owner is not None:
                raise_busy()
            token = object()
            self._benchmark_owner = token
            return token

    def release_benchmark(self, token: object) -> None:
        with self._lock:
            if self._benchmark_owner is token:
                self._benchmark_owner = None

    def check_not_busy(self, token: object = None) -> None:
        owner = self._benchmark_owner
        if owner is not None and owner is not token:
            raise_busy()

    def forward(self, values: np.ndarray) -> float:
        """Run one forward pass on an already laid-out input tensor."""
        batch = values[None, ...].astype(np.float32)
        with self._lock:
            outputs = onnx_exec.run_graph(self.graph, {self.metadata.input_name: batch})
        (out,) = outputs.values()
        flat = np.asarray(out, dtype=np.float64).ravel()
        if flat.size != 1:
            raise ModelContractError(
                f"model emitted {flat.size} output values, expected a single score"
            )
        return float(flat[0])


def raise_busy():
    from .errors import BusyError

    raise BusyError("model handle is reserved by a running benchmark")


def _graph_input_layout(graph: onnx_pb.Graph, metadata: ModelMetadata) -> str:
    """Infer NCHW/NHWC from the graph input declaration and cross-check it."""
    inits = {t.name for t in graph.initializers}
    inputs = [vi for vi in graph.inputs if vi.name not in inits]
    if len(inputs) != 1:
        raise ConfigurationError(f"expected exactly one graph input, found {len(inputs)}")
    vi = inputs[0]
    if vi.name != metadata.input_name:
        raise ConfigurationError(
            f"metadata input_name {metadata.input_name!r} does not match graph input {vi.name!r}"
        )
    dims = vi.dims
    if len(dims) != 4:
        raise ConfigurationError(f"graph input must be rank 4, declared {dims}")
    _, d1, d2, d3 = dims
    if d1 == 3:
        layout, side = "planar", d2
        if d2 != d3:
            raise ConfigurationError(f"graph input spatial dims differ: {dims}")
    elif d3 == 3:
        layout, side = "interleaved", d1
        if d1 != d2:
            raise ConfigurationError(f"graph input spatial dims differ: {dims}")
    else:
        raise ConfigurationError(f"graph input has no 3-channel axis: {dims}")
    if not isinstance(side, int):
        raise ConfigurationError(f"graph input side is not fixed: {dims}")
    if side != metadata.input_side:
        raise ConfigurationError(
            f"metadata declares input side {metadata.input_side} but the model "
            f"declares {side}"
        )
    if layout != metadata.channel_layout:
        raise ConfigurationError(
            f"metadata declares {metadata.channel_layout} layout but the model "
            f"input is {layout}"
        )
    return layout


def load_model(bundle: ModelBundle) -> ModelHandle:
    """Validate a bundle and return a handle answering forward passes.

    Raises IntegrityError on checksum mismatch, ConfigurationError when
    metadata disagrees with the blob's declared shapes, and CapabilityError
    naming the first unsupported operator.
    """
    bundle.verify()
    try:
        model = onnx_pb.decode_model(bundle.model_blob)
    except ValueError as exc:
        raise ConfigurationError(f"model blob is not a valid interchange file: {exc}") from exc
    graph = model.graph
    unsupported = onnx_exec.unsupported_ops(graph)
    if unsupported:
        raise CapabilityError(unsupported[0])
    if len(graph.outputs) != 1:
        raise ConfigurationError(
            f"expected exactly one graph output, found {len(graph.outputs)}"
        )
    return ModelHandle(bundle.metadata, graph, bundle.model_id)


def sigmoid(x: float) -> float:
    """Logistic function 1 / (1 + e^-x), numerically stable in both tails."""
    if not math.isfinite(x):
        raise NumericError(f"sigmoid requires a finite argument, got {x!r}")
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


def _to_graph_layout(inp: ModelInput, layout: str) -> np.ndarray:
    values = np.asarray(inp.values, dtype=np.float32)
    if inp.channel_layout == layout:
        return values
    if inp.channel_layout == "interleaved":  # HWC -> CHW
        return np.ascontiguousarray(values.transpose(2, 0, 1))
    return np.ascontiguousarray(values.transpose(1, 2, 0))  # CHW -> HWC


def predict(handle: ModelHandle, inp: ModelInput, _benchmark_token: object = None) -> Prediction:
    """Score one input; latency covers the forward pass only."""
    handle.check_not_busy(_benchmark_token)
    if inp.side != handle.input_side:
        raise ValidationError(
            f"input side {inp.side} does not match model input side {handle.input_side}"
        )
    expected_shape = (
        (3, inp.side, inp.side) if inp.channel_layout == "planar" else (inp.side, inp.side, 3)
    )
    if tuple(np.shape(inp.values)) != expected_shape:
        raise ValidationError(
            f"input values shape {np.shape(inp.values)} does not match declared "
            f"{inp.channel_layout} layout {expected_shape}"
        )
    values = _to_graph_layout(inp, handle._graph_layout)
    t0 = time.perf_counter()
    raw = handle.forward(values)
    latency_ms = (time.perf_counter() - t0) * 1000.0
    if handle.metadata.output_kind == "logit":
        score = sigmoid(raw)
    else:
        if not (0.0 <= raw <= 1.0):
            raise ModelContractError(
                f"probability-output model emitted {raw}, outside [0, 1]"
            )
        score = float(raw)
    threshold = handle.metadata.decision_threshold
    decision = "wssv" if score >= threshold else "healthy"  # tie classifies positive
    return Prediction(
        score=score,
        decision=decision,
        model_id=handle.model_id,
        latency_ms=latency_ms,
        input_provenance=inp.provenance,
    )


def predict_batch(handle: ModelHandle, inputs: list[ModelInput]) -> list[Prediction]:
    """Predict each input in order; element i equals predict(inputs[i]) exactly."""
    for i, inp in enumerate(inputs):
        if inp.side != handle.input_side:
            raise ValidationError(
                f"batch input {i}: side {inp.side} does not match model input side "
                f"{handle.input_side}"
            )
    return [predict(handle, inp) for inp in inputs]


def preprocess_config_for(metadata: ModelMetadata, crop_mode="center_square", roi=None):
    """Build the preprocessing config a bundle's metadata prescribes."""
    from .imaging import PreprocessConfig

    return PreprocessConfig(
        target_side=metadata.input_side,
        crop_mode=crop_mode,
        roi=roi,
        scale=tuple(metadata.scale),
        offset=tuple(metadata.offset),
        channel_layout=metadata.channel_layout,
    )
