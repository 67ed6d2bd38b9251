"""HTTP surface: prediction, field reports, dataset admin, model registry.

One FastAPI app under /api/v1 glues the library modules together for the
web client. Uploaded images become store samples, predictions run against
the single active model, and reports reference stored samples only.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from fastapi import FastAPI, File, Form, Query, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from . import __version__
from .datastore import SampleStore
from .errors import (
    BusyError,
    NotFoundError,
    ValidationError,
    WssvWatchError,
)
from .imaging import crop_resize, decode_image, encode_png, preprocess
from .inference import (
    ModelBundle,
    ModelHandle,
    ModelMetadata,
    bundle_from_tar,
    load_model,
    predict,
    preprocess_config_for,
    write_bundle,
    read_bundle,
)
from .records import from_rfc3339, to_rfc3339, utc_now
from .reporting import RANGES, ReportStore
from .saliency import OcclusionConfig, occlusion_saliency, render_overlay

ENV_PREFIX = "WSSVWATCH_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8077
    data_dir: str = "wssvwatch-data"
    default_threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.default_threshold < 1.0):
            raise ValidationError(
                "default_threshold must be strictly inside (0, 1)",
                field="default_threshold",
            )
        if not (0 < self.port < 65536):
            raise ValidationError(f"port {self.port} out of range", field="port")


def load_config(path=None, env=None) -> ServiceConfig:
    """Config file values first, then WSSVWATCH_* environment overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config file: {exc}")
        except ValueError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = set(loaded) - {"host", "port", "data_dir", "default_threshold"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    if env.get(ENV_PREFIX + "HOST"):
        values["host"] = env[ENV_PREFIX + "HOST"]
    if env.get(ENV_PREFIX + "PORT"):
        values["port"] = int(env[ENV_PREFIX + "PORT"])
    if env.get(ENV_PREFIX + "DATA_DIR"):
        values["data_dir"] = env[ENV_PREFIX + "DATA_DIR"]
    if env.get(ENV_PREFIX + "THRESHOLD"):
        values["default_threshold"] = float(env[ENV_PREFIX + "THRESHOLD"])
    return ServiceConfig(**values)


def registry_id(blob: bytes, metadata: ModelMetadata) -> str:
    """Content-derived registry id: same bundle bytes, same id."""
    canon = json.dumps(metadata.to_json(), sort_keys=True).encode()
    return hashlib.sha256(blob + b"\n" + canon).hexdigest()[:16]


class ModelRegistry:
    """Uploaded bundles on disk, at most one marked active.

    Uploads land inactive and idempotently (same bytes, same entry).
    Activation swaps an atomic pointer; handles already dispatched keep
    answering, so in-flight predictions finish on the old model.
    """

    ACTIVE_FILE = "active.json"
    ENTRY_FILE = "entry.json"

    def __init__(self, root, clock=utc_now, default_threshold: float | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.default_threshold = default_threshold
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        self._active_id: str | None = None
        self._scan()

    def _scan(self) -> None:
        for entry_dir in sorted(self.root.iterdir()):
            if not entry_dir.is_dir():
                continue
            bundle = read_bundle(entry_dir)
            handle = load_model(bundle)
            uploaded_at = to_rfc3339(self.clock())
            entry_path = entry_dir / self.ENTRY_FILE
            if entry_path.exists():
                uploaded_at = json.loads(entry_path.read_text())["uploaded_at"]
            self._entries[entry_dir.name] = {
                "bundle": bundle,
                "handle": handle,
                "uploaded_at": uploaded_at,
            }
        active_path = self.root / self.ACTIVE_FILE
        if active_path.exists():
            active_id = json.loads(active_path.read_text())["active"]
            if active_id in self._entries:
                self._active_id = active_id

    def register(self, bundle: ModelBundle) -> str:
        """Validate and store a bundle; returns its registry id."""
        handle = load_model(bundle)  # any load failure rejects the upload
        model_id = registry_id(bundle.model_blob, bundle.metadata)
        with self._lock:
            if model_id in self._entries:
                return model_id
            entry_dir = self.root / model_id
            write_bundle(bundle, entry_dir)
            uploaded_at = to_rfc3339(self.clock())
            (entry_dir / self.ENTRY_FILE).write_text(
                json.dumps({"uploaded_at": uploaded_at}) + "\n"
            )
            self._entries[model_id] = {
                "bundle": bundle,
                "handle": handle,
                "uploaded_at": uploaded_at,
            }
        return model_id

    def register_from_tar(self, data: bytes) -> str:
        """Accept the tar wire format; a missing decision threshold takes
        the service default."""
        bundle = bundle_from_tar(data)
        if self.default_threshold is not None:
            raw = json.loads(self._raw_metadata(data))
            if "decision_threshold" not in raw:
                meta = bundle.metadata
                bundle = ModelBundle(
                    metadata=ModelMetadata.from_json(
                        {**meta.to_json(), "decision_threshold": self.default_threshold}
                    ),
                    model_blob=bundle.model_blob,
                    checksum=bundle.checksum,
                )
        return self.register(bundle)

    @staticmethod
    def _raw_metadata(data: bytes) -> str:
        import io
        import tarfile

        with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tar:
            for member in tar.getmembers():
                if Path(member.name).name == "metadata.json":
                    return tar.extractfile(member).read().decode()
        return "{}"

    def activate(self, model_id: str) -> None:
        with self._lock:
            if model_id not in self._entries:
                raise NotFoundError(f"no registered model with id {model_id}")
            tmp = self.root / (self.ACTIVE_FILE + ".tmp")
            tmp.write_text(json.dumps({"active": model_id}) + "\n")
            os.replace(tmp, self.root / self.ACTIVE_FILE)
            self._active_id = model_id

    @property
    def active_id(self) -> str | None:
        return self._active_id

    def active_handle(self) -> ModelHandle | None:
        active = self._active_id
        if active is None:
            return None
        return self._entries[active]["handle"]

    def get_handle(self, model_id: str) -> ModelHandle:
        if model_id not in self._entries:
            raise NotFoundError(f"no registered model with id {model_id}")
        return self._entries[model_id]["handle"]

    def entries(self) -> list[dict]:
        out = []
        for model_id in sorted(self._entries):
            entry = self._entries[model_id]
            meta = entry["bundle"].metadata
            out.append(
                {
                    "id": model_id,
                    "name": meta.name,
                    "version": meta.version,
                    "input_side": meta.input_side,
                    "checksum": entry["bundle"].checksum,
                    "active": model_id == self._active_id,
                    "uploaded_at": entry["uploaded_at"],
                }
            )
        return out


class NoActiveModelError(WssvWatchError):
    """Prediction was requested before any model was activated."""


def _error_payload(exc: Exception) -> dict:
    payload = {"error": str(exc)}
    field = getattr(exc, "field", None)
    if field:
        payload["field"] = field
    return payload


def create_app(config: ServiceConfig | None = None, clock=utc_now) -> FastAPI:
    config = config or ServiceConfig()
    data_dir = Path(config.data_dir)
    store = SampleStore(data_dir / "dataset", clock=clock)
    reports = ReportStore(data_dir / "reports", clock=clock)
    registry = ModelRegistry(
        data_dir / "models", clock=clock, default_threshold=config.default_threshold
    )

    app = FastAPI(title="wssvwatch", version=__version__)
    app.state.config = config
    app.state.store = store
    app.state.reports = reports
    app.state.registry = registry

    @app.exception_handler(WssvWatchError)
    async def domain_error(request: Request, exc: WssvWatchError):
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, (NoActiveModelError, BusyError)):
            status = 409
        else:
            status = 400
        return JSONResponse(status_code=status, content=_error_payload(exc))

    @app.exception_handler(RequestValidationError)
    async def request_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        message = first.get("msg", "invalid request")
        return JSONResponse(
            status_code=400, content={"error": f"{loc}: {message}" if loc else message}
        )

    @app.get("/api/v1/health")
    async def health():
        return {
            "status": "ok",
            "version": __version__,
            "active_model": registry.active_id,
            "model_count": len(registry.entries()),
            "sample_count": store.count(),
            "time": to_rfc3339(clock()),
        }

    @app.get("/api/v1/schema")
    async def schema():
        return {
            "ranges": RANGES,
            "decisions": ["healthy", "wssv"],
            "labels": ["healthy", "wssv", "unlabeled"],
            "splits": ["train", "validation", "test", "unassigned"],
            "geo_sources": ["device", "manual"],
        }

    def _require_active() -> ModelHandle:
        handle = registry.active_handle()
        if handle is None:
            raise NoActiveModelError(
                "no active model; upload a bundle via POST /api/v1/models and "
                "activate it before predicting"
            )
        return handle

    @app.post("/api/v1/predict")
    async def http_predict(
        image: UploadFile = File(...),
        saliency: bool = Query(False),
        patch_side: int = Query(16),
        stride: int = Query(8),
    ):
        handle = _require_active()  # kept for the whole request even if a
        data = await image.read()  # concurrent activation swaps the registry
        img = decode_image(data)
        sample = store.add_sample(data, source="field_report")
        cfg = preprocess_config_for(handle.metadata)
        inp = preprocess(img, cfg, provenance=sample.id)
        pred = predict(handle, inp)
        body = {"sample_id": sample.id, **pred.to_json()}
        if saliency:
            sal_map = occlusion_saliency(
                handle, inp, OcclusionConfig(patch_side=patch_side, stride=stride)
            )
            overlay = render_overlay(sal_map, crop_resize(img, cfg))
            body["saliency"] = {
                "baseline_score": sal_map.baseline_score,
                "side": sal_map.side,
                "overlay_png": "data:image/png;base64,"
                + base64.b64encode(encode_png(overlay)).decode(),
            }
        return body

    @app.post("/api/v1/reports", status_code=201)
    async def submit_report(draft: dict):
        try:
            record = reports.submit(draft, sample_exists=store.exists)
        except NotFoundError as exc:
            # a bad reference in the body is the client's error, not a
            # missing route resource
            raise ValidationError(str(exc), field="images") from exc
        return record.to_json()

    @app.get("/api/v1/reports")
    async def query_reports(
        time_from: str | None = Query(None, alias="from"),
        time_to: str | None = Query(None, alias="to"),
        bbox: str | None = Query(None),
        decision: str | None = Query(None),
    ):
        def parse_ts(raw: str | None, name: str) -> datetime | None:
            if raw is None:
                return None
            try:
                return from_rfc3339(raw)
            except ValueError:
                raise ValidationError(f"{name} is not an RFC 3339 timestamp", field=name)

        box = None
        if bbox is not None:
            parts = bbox.split(",")
            if len(parts) != 4:
                raise ValidationError(
                    "bbox must be min_lon,min_lat,max_lon,max_lat", field="bbox"
                )
            try:
                box = tuple(float(p) for p in parts)
            except ValueError:
                raise ValidationError("bbox parts must be numbers", field="bbox")
        found = reports.query(
            time_from=parse_ts(time_from, "from"),
            time_to=parse_ts(time_to, "to"),
            bbox=box,
            decision=decision,
        )
        return {"reports": [r.to_json() for r in found]}

    @app.get("/api/v1/reports/{report_id}")
    async def get_report(report_id: str):
        return reports.get(report_id).to_json()

    @app.post("/api/v1/dataset/samples", status_code=201)
    async def add_sample(
        image: UploadFile = File(...),
        label: str = Form("unlabeled"),
        source: str = Form("web"),
        device_label: str | None = Form(None),
    ):
        data = await image.read()
        sample = store.add_sample(
            data, label=label, source=source, device_label=device_label
        )
        return sample.to_record()

    @app.get("/api/v1/dataset/samples")
    async def list_samples(
        label: str | None = Query(None), split: str | None = Query(None)
    ):
        found = store.list_samples(label=label, split=split)
        return {"samples": [s.to_record() for s in found]}

    @app.put("/api/v1/dataset/samples/{sample_id}/label")
    async def set_label(sample_id: str, body: dict):
        label = body.get("label")
        if label is None:
            raise ValidationError("body must carry a label", field="label")
        editor = body.get("editor", "api")
        sample = store.set_label(sample_id, label, editor=editor)
        return sample.to_record()

    @app.get("/api/v1/dataset/samples/{sample_id}/image")
    async def get_sample_image(sample_id: str):
        data = store.load_bytes(sample_id)
        media = "image/png" if data[:8] == b"\x89PNG\r\n\x1a\n" else "image/jpeg"
        return Response(content=data, media_type=media)

    @app.get("/api/v1/dataset/export")
    async def export_dataset(
        label: str | None = Query(None), split: str | None = Query(None)
    ):
        tar_bytes = store.export_combined(label=label, split=split)
        return Response(
            content=tar_bytes,
            media_type="application/x-tar",
            headers={"Content-Disposition": 'attachment; filename="dataset.tar"'},
        )

    @app.get("/api/v1/models")
    async def list_models():
        return {"models": registry.entries(), "active": registry.active_id}

    @app.post("/api/v1/models", status_code=201)
    async def upload_model(bundle: UploadFile = File(...)):
        data = await bundle.read()
        model_id = registry.register_from_tar(data)
        entry = next(e for e in registry.entries() if e["id"] == model_id)
        return entry

    @app.post("/api/v1/models/{model_id}/activate")
    async def activate_model(model_id: str):
        registry.activate(model_id)
        return {"active": model_id, "models": registry.entries()}

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
