"""Geotagged field reports: validated submission, immutable storage, queries.

A report ties one or more flagged images (with the predictions that flagged
them) to a pond location and optional water and weather readings. Records
never change after submission; queries filter by time window, bounding box,
and decision, newest first.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import NotFoundError, ValidationError
from .records import from_rfc3339, to_rfc3339, utc_now

GEO_SOURCES = ("device", "manual")

# Accepted value ranges, published to clients so they can pre-validate.
RANGES = {
    "latitude": {"min": -90.0, "max": 90.0},
    "longitude": {"min": -180.0, "max": 180.0},
    "accuracy": {"min": 0.0},
    "ph": {"min": 0.0, "max": 14.0},
    "salinity": {"min": 0.0},
    "dissolved_oxygen": {"min": 0.0},
    "ammonia": {"min": 0.0},
}


def _check_range(name: str, value, required: bool = False):
    if value is None:
        if required:
            raise ValidationError(f"{name} is required", field=name)
        return None
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number", field=name)
    bounds = RANGES.get(name, {})
    lo, hi = bounds.get("min"), bounds.get("max")
    if lo is not None and value < lo:
        raise ValidationError(f"{name} {value} below minimum {lo}", field=name)
    if hi is not None and value > hi:
        raise ValidationError(f"{name} {value} above maximum {hi}", field=name)
    return value


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    source: str = "manual"
    accuracy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "latitude", _check_range("latitude", self.latitude, required=True))
        object.__setattr__(self, "longitude", _check_range("longitude", self.longitude, required=True))
        object.__setattr__(self, "accuracy", _check_range("accuracy", self.accuracy))
        if self.source not in GEO_SOURCES:
            raise ValidationError(
                f"location source must be one of {GEO_SOURCES}", field="source"
            )


@dataclass(frozen=True)
class WaterParams:
    temperature: float | None = None
    ph: float | None = None
    salinity: float | None = None
    dissolved_oxygen: float | None = None
    ammonia: float | None = None

    def __post_init__(self):
        for name in ("ph", "salinity", "dissolved_oxygen", "ammonia"):
            object.__setattr__(self, name, _check_range(name, getattr(self, name)))
        if self.temperature is not None:
            object.__setattr__(self, "temperature", float(self.temperature))


@dataclass(frozen=True)
class Environment:
    air_temperature: float | None = None
    weather_note: str | None = None


@dataclass(frozen=True)
class FlaggedImage:
    """A stored sample id plus the prediction that flagged it."""

    sample_id: str
    prediction: dict

    def __post_init__(self):
        if not self.sample_id:
            raise ValidationError("sample_id is required", field="sample_id")
        pred = dict(self.prediction)
        score = pred.get("score")
        if score is None or not (0.0 <= float(score) <= 1.0):
            raise ValidationError(
                f"prediction score {score!r} outside [0, 1]", field="prediction.score"
            )
        if pred.get("decision") not in ("healthy", "wssv"):
            raise ValidationError(
                f"prediction decision {pred.get('decision')!r} unknown",
                field="prediction.decision",
            )
        object.__setattr__(self, "prediction", pred)


@dataclass(frozen=True)
class ReportRecord:
    """One immutable field report."""

    id: str
    created_at: datetime
    location: GeoPoint
    images: tuple
    submitter: str
    water: WaterParams = field(default_factory=WaterParams)
    environment: Environment = field(default_factory=Environment)
    notes: str | None = None

    def __post_init__(self):
        if not self.images:
            raise ValidationError("a report needs at least one image", field="images")
        if not self.submitter or not str(self.submitter).strip():
            raise ValidationError("submitter is required", field="submitter")
        object.__setattr__(self, "images", tuple(self.images))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "created_at": to_rfc3339(self.created_at),
            "location": {k: v for k, v in asdict(self.location).items() if v is not None},
            "images": [
                {"sample_id": img.sample_id, "prediction": dict(img.prediction)}
                for img in self.images
            ],
            "water": {k: v for k, v in asdict(self.water).items() if v is not None},
            "environment": {
                k: v for k, v in asdict(self.environment).items() if v is not None
            },
            "notes": self.notes,
            "submitter": self.submitter,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReportRecord":
        return cls(
            id=obj["id"],
            created_at=from_rfc3339(obj["created_at"]),
            location=GeoPoint(**obj["location"]),
            images=tuple(FlaggedImage(**img) for img in obj["images"]),
            water=WaterParams(**obj.get("water", {})),
            environment=Environment(**obj.get("environment", {})),
            notes=obj.get("notes"),
            submitter=obj["submitter"],
        )


def parse_report_draft(obj: dict) -> dict:
    """Validate a submitted draft's shape, raising on the first bad field."""
    if not isinstance(obj, dict):
        raise ValidationError("report draft must be a JSON object")
    location = obj.get("location")
    if not isinstance(location, dict):
        raise ValidationError("location is required", field="location")
    images = obj.get("images")
    if not isinstance(images, list) or not images:
        raise ValidationError("a report needs at least one image", field="images")
    try:
        return {
            "location": GeoPoint(**location),
            "images": tuple(FlaggedImage(**img) for img in images),
            "water": WaterParams(**(obj.get("water") or {})),
            "environment": Environment(**(obj.get("environment") or {})),
            "notes": obj.get("notes"),
            "submitter": obj.get("submitter") or "",
        }
    except TypeError as exc:
        raise ValidationError(f"unrecognized report field: {exc}") from exc


class ReportStore:
    """sqlite-backed report persistence with filterable queries."""

    def __init__(self, root, clock=utc_now):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self._write_lock = threading.Lock()
        self._db = sqlite3.connect(self.root / "reports.db", check_same_thread=False)
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS reports ("
            "id TEXT PRIMARY KEY, created_at TEXT NOT NULL, "
            "latitude REAL NOT NULL, longitude REAL NOT NULL, "
            "body TEXT NOT NULL)"
        )
        self._db.commit()

    def close(self) -> None:
        self._db.close()

    def submit(self, draft: dict, sample_exists=None) -> ReportRecord:
        """Validate and persist a draft; the stored record never changes.

        ``sample_exists`` is the dataset store's membership check; every
        referenced sample id must pass it.
        """
        parts = parse_report_draft(draft)
        if sample_exists is not None:
            for img in parts["images"]:
                if not sample_exists(img.sample_id):
                    raise NotFoundError(f"report references unknown sample {img.sample_id}")
        record = ReportRecord(
            id=uuid.uuid4().hex[:16],
            created_at=self.clock(),
            location=parts["location"],
            images=parts["images"],
            water=parts["water"],
            environment=parts["environment"],
            notes=parts["notes"],
            submitter=parts["submitter"],
        )
        body = json.dumps(record.to_json(), sort_keys=True)
        with self._write_lock:
            self._db.execute(
                "INSERT INTO reports (id, created_at, latitude, longitude, body) "
                "VALUES (?, ?, ?, ?, ?)",
                (
                    record.id,
                    to_rfc3339(record.created_at),
                    record.location.latitude,
                    record.location.longitude,
                    body,
                ),
            )
            self._db.commit()
        return record

    def get(self, report_id: str) -> ReportRecord:
        cur = self._db.execute("SELECT body FROM reports WHERE id = ?", (report_id,))
        row = cur.fetchone()
        if row is None:
            raise NotFoundError(f"no report with id {report_id}")
        return ReportRecord.from_json(json.loads(row[0]))

    def query(
        self,
        time_from: datetime | None = None,
        time_to: datetime | None = None,
        bbox: tuple[float, float, float, float] | None = None,
        decision: str | None = None,
    ) -> list[ReportRecord]:
        """Filter stored reports; results sorted created_at descending.

        bbox is (min_lon, min_lat, max_lon, max_lat).
        """
        if time_from is not None and time_to is not None and time_from > time_to:
            raise ValidationError("time range is inverted: from is after to", field="from")
        clauses, args = [], []
        if time_from is not None:
            clauses.append("created_at >= ?")
            args.append(to_rfc3339(time_from))
        if time_to is not None:
            clauses.append("created_at <= ?")
            args.append(to_rfc3339(time_to))
        if bbox is not None:
            min_lon, min_lat, max_lon, max_lat = (float(v) for v in bbox)
            if min_lon > max_lon or min_lat > max_lat:
                raise ValidationError("bounding box is inverted", field="bbox")
            _check_range("longitude", min_lon)
            _check_range("longitude", max_lon)
            _check_range("latitude", min_lat)
            _check_range("latitude", max_lat)
            clauses.append("longitude BETWEEN ? AND ? AND latitude BETWEEN ? AND ?")
            args.extend([min_lon, max_lon, min_lat, max_lat])
        if decision is not None and decision not in ("healthy", "wssv"):
            raise ValidationError(f"unknown decision {decision!r}", field="decision")
        query = "SELECT body FROM reports"
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY created_at DESC, id"
        records = [
            ReportRecord.from_json(json.loads(row[0]))
            for row in self._db.execute(query, args)
        ]
        if decision is not None:
            records = [
                r
                for r in records
                if any(img.prediction.get("decision") == decision for img in r.images)
            ]
        return records

    def count(self) -> int:
        return self._db.execute("SELECT COUNT(*) FROM reports").fetchone()[0]
