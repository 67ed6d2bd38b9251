"""Content-addressed image dataset store with labels, splits, and export.

Blobs live in a sha-256-addressed directory tree; records live in an
embedded sqlite file next to them. Identical bytes are stored once and
always resolve to the same id, so ingest is idempotent. Exports are
deterministic tars that import back bit-exactly.
"""

from __future__ import annotations

import io
import json
import sqlite3
import tarfile
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .errors import (
    IntegrityError,
    LeakageError,
    NotFoundError,
    ValidationError,
)
from .evaluation import FoldPlan, SplitAssignment
from .imaging import content_id, decode_image
from .records import LABELS, ImageSample, from_rfc3339, to_rfc3339, utc_now

SCHEMA_VERSION = "1"
MANIFEST_FILE = "manifest.json"
BLOBS_TAR_FILE = "blobs.tar"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS samples (
    id TEXT PRIMARY KEY,
    label TEXT NOT NULL,
    split TEXT NOT NULL,
    source TEXT NOT NULL,
    captured_at TEXT NOT NULL,
    image_ref TEXT NOT NULL,
    device_label TEXT,
    augmentation_of TEXT,
    fold INTEGER
);
CREATE TABLE IF NOT EXISTS label_audit (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    sample_id TEXT NOT NULL,
    editor TEXT NOT NULL,
    at TEXT NOT NULL,
    old_label TEXT NOT NULL,
    new_label TEXT NOT NULL
);
"""


def _ext_for(data: bytes) -> str:
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:2] == b"\xff\xd8":
        return "jpg"
    return "bin"


@dataclass
class DatasetManifest:
    """Record listing plus per-label counts for one export."""

    samples: list[dict]
    counts: dict[str, int]
    created_at: datetime
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        ids = [s["id"] for s in self.samples]
        if len(ids) != len(set(ids)):
            raise ValidationError("manifest sample ids are not unique")
        tallies = {label: 0 for label in LABELS}
        for s in self.samples:
            tallies[s["label"]] = tallies.get(s["label"], 0) + 1
        if {k: v for k, v in self.counts.items() if v} != {
            k: v for k, v in tallies.items() if v
        }:
            raise ValidationError(
                f"manifest counts {self.counts} do not match record tallies {tallies}"
            )

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "created_at": to_rfc3339(self.created_at),
            "counts": dict(self.counts),
            "samples": [dict(s) for s in self.samples],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        return cls(
            samples=[dict(s) for s in obj["samples"]],
            counts={str(k): int(v) for k, v in obj["counts"].items()},
            created_at=from_rfc3339(obj["created_at"]),
            schema_version=str(obj.get("schema_version", SCHEMA_VERSION)),
        )


def _det_tar(entries: list[tuple[str, bytes]]) -> bytes:
    """Pack (name, data) pairs into a byte-stable tar."""
    buf = io.BytesIO()
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


def _untar(data: bytes) -> dict[str, bytes]:
    try:
        with tarfile.open(fileobj=io.BytesIO(data), mode="r:*") as tar:
            return {
                m.name: tar.extractfile(m).read() for m in tar.getmembers() if m.isfile()
            }
    except tarfile.TarError as exc:
        raise ValidationError(f"not a valid archive: {exc}") from exc


class SampleStore:
    """Dataset persistence rooted at a directory.

    Reads are lock-free against sqlite; writes are serialized so a failed
    mutation never leaves partial state behind.
    """

    def __init__(self, root, clock=utc_now):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.blob_root = self.root / "blobs"
        self.blob_root.mkdir(exist_ok=True)
        self.clock = clock
        self._write_lock = threading.Lock()
        self._db = sqlite3.connect(self.root / "store.db", check_same_thread=False)
        self._db.executescript(_SCHEMA)
        self._db.commit()

    def close(self) -> None:
        self._db.close()

    # -- blob layer -----------------------------------------------------

    def _blob_path(self, sample_id: str, ext: str) -> Path:
        return self.blob_root / sample_id[:2] / f"{sample_id}.{ext}"

    def load_bytes(self, sample_id: str) -> bytes:
        row = self._row(sample_id)
        path = self.root / row["image_ref"]
        if not path.exists():
            raise IntegrityError(f"blob for {sample_id} is missing at {row['image_ref']}")
        return path.read_bytes()

    # -- record layer ---------------------------------------------------

    _COLS = "id, label, split, source, captured_at, image_ref, device_label, augmentation_of, fold"

    def _row(self, sample_id: str) -> dict:
        cur = self._db.execute(
            f"SELECT {self._COLS} FROM samples WHERE id = ?", (sample_id,)
        )
        row = cur.fetchone()
        if row is None:
            raise NotFoundError(f"no sample with id {sample_id}")
        return dict(zip(self._COLS.replace(" ", "").split(","), row))

    @staticmethod
    def _sample_from_row(row: dict) -> ImageSample:
        return ImageSample(
            id=row["id"],
            label=row["label"],
            split=row["split"],
            source=row["source"],
            captured_at=from_rfc3339(row["captured_at"]),
            image_ref=row["image_ref"],
            device_label=row["device_label"],
            augmentation_of=row["augmentation_of"],
        )

    def exists(self, sample_id: str) -> bool:
        cur = self._db.execute("SELECT 1 FROM samples WHERE id = ?", (sample_id,))
        return cur.fetchone() is not None

    def get(self, sample_id: str) -> ImageSample:
        return self._sample_from_row(self._row(sample_id))

    def fold_of(self, sample_id: str) -> int | None:
        return self._row(sample_id)["fold"]

    def count(self) -> int:
        return self._db.execute("SELECT COUNT(*) FROM samples").fetchone()[0]

    def list_samples(
        self, label: str | None = None, split: str | None = None
    ) -> list[ImageSample]:
        query = f"SELECT {self._COLS} FROM samples"
        clauses, args = [], []
        if label is not None:
            clauses.append("label = ?")
            args.append(label)
        if split is not None:
            clauses.append("split = ?")
            args.append(split)
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY id"
        cols = self._COLS.replace(" ", "").split(",")
        return [
            self._sample_from_row(dict(zip(cols, row)))
            for row in self._db.execute(query, args)
        ]

    # -- mutations ------------------------------------------------------

    def add_sample(
        self,
        image_bytes: bytes,
        label: str = "unlabeled",
        split: str = "unassigned",
        source: str = "import",
        captured_at: datetime | None = None,
        device_label: str | None = None,
        augmentation_of: str | None = None,
    ) -> ImageSample:
        """Store one image; duplicate bytes return the existing record.

        The image must decode before anything is written, so corrupt input
        leaves the store untouched.
        """
        decode_image(image_bytes)  # raises DecodeError first, atomically
        sample_id = content_id(image_bytes)
        if augmentation_of is not None and split in ("validation", "test"):
            raise LeakageError(
                f"augmented sample (of {augmentation_of}) cannot enter the {split} split"
            )
        with self._write_lock:
            if self.exists(sample_id):
                return self.get(sample_id)
            ext = _ext_for(image_bytes)
            path = self._blob_path(sample_id, ext)
            path.parent.mkdir(exist_ok=True)
            path.write_bytes(image_bytes)
            sample = ImageSample(
                id=sample_id,
                label=label,
                split=split,
                source=source,
                captured_at=captured_at or self.clock(),
                image_ref=str(path.relative_to(self.root)),
                device_label=device_label,
                augmentation_of=augmentation_of,
            )
            record = sample.to_record()
            self._db.execute(
                "INSERT INTO samples (id, label, split, source, captured_at, "
                "image_ref, device_label, augmentation_of, fold) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, NULL)",
                (
                    record["id"],
                    record["label"],
                    record["split"],
                    record["source"],
                    record["captured_at"],
                    record["image_ref"],
                    record["device_label"],
                    record["augmentation_of"],
                ),
            )
            self._db.commit()
            return sample

    def set_label(self, sample_id: str, label: str, editor: str = "admin") -> ImageSample:
        """Relabel a sample, appending to its audit trail."""
        if label not in LABELS:
            raise ValidationError(f"unknown label {label!r}", field="label")
        with self._write_lock:
            row = self._row(sample_id)
            old = row["label"]
            self._db.execute(
                "UPDATE samples SET label = ? WHERE id = ?", (label, sample_id)
            )
            self._db.execute(
                "INSERT INTO label_audit (sample_id, editor, at, old_label, new_label) "
                "VALUES (?, ?, ?, ?, ?)",
                (sample_id, editor, to_rfc3339(self.clock()), old, label),
            )
            self._db.commit()
        return self.get(sample_id)

    def audit_for(self, sample_id: str) -> list[dict]:
        self._row(sample_id)  # not-found check
        cur = self._db.execute(
            "SELECT editor, at, old_label, new_label FROM label_audit "
            "WHERE sample_id = ? ORDER BY seq",
            (sample_id,),
        )
        return [
            {"editor": e, "at": at, "old_label": o, "new_label": n}
            for e, at, o, n in cur
        ]

    def assign_splits(self, plan: "SplitAssignment | FoldPlan") -> int:
        """Apply a split or fold plan atomically; returns effective changes.

        Every planned id must exist and be labeled; augmented samples are
        rejected outright since they may never reach validation or test.
        Re-applying an identical plan reports zero changes.
        """
        if isinstance(plan, SplitAssignment):
            targets = {i: ("train", None) for i in plan.train_ids}
            targets.update({i: ("test", None) for i in plan.test_ids})
        elif isinstance(plan, FoldPlan):
            targets = {i: ("train", fold) for i, fold in plan.assignments.items()}
        else:
            raise ValidationError(f"unsupported plan type {type(plan).__name__}")
        with self._write_lock:
            rows = {}
            for sample_id in targets:
                row = self._row(sample_id)  # unknown id -> not-found, nothing written
                if row["label"] == "unlabeled":
                    raise ValidationError(
                        f"sample {sample_id} is unlabeled and cannot be split-assigned"
                    )
                if row["augmentation_of"] is not None:
                    raise LeakageError(
                        f"augmented sample {sample_id} cannot appear in a split plan"
                    )
                rows[sample_id] = row
            changed = 0
            for sample_id, (split, fold) in targets.items():
                row = rows[sample_id]
                if row["split"] == split and row["fold"] == fold:
                    continue
                self._db.execute(
                    "UPDATE samples SET split = ?, fold = ? WHERE id = ?",
                    (split, fold, sample_id),
                )
                changed += 1
            self._db.commit()
        return changed

    # -- export / import ------------------------------------------------

    def export_manifest(
        self, label: str | None = None, split: str | None = None
    ) -> DatasetManifest:
        samples = self.list_samples(label=label, split=split)
        counts = {name: 0 for name in LABELS}
        for sample in samples:
            counts[sample.label] += 1
        return DatasetManifest(
            samples=[s.to_record() for s in samples],
            counts=counts,
            created_at=self.clock(),
        )

    def export_archive(
        self, label: str | None = None, split: str | None = None
    ) -> tuple[bytes, bytes]:
        """Manifest JSON plus a tar of exactly the referenced blobs."""
        manifest = self.export_manifest(label=label, split=split)
        manifest_bytes = (
            json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n"
        ).encode()
        entries = []
        for record in manifest.samples:
            data = self.load_bytes(record["id"])
            entries.append((f"{record['id']}.{_ext_for(data)}", data))
        return manifest_bytes, _det_tar(entries)

    def export_combined(
        self, label: str | None = None, split: str | None = None
    ) -> bytes:
        """Single-tar form: manifest.json beside a blobs/ tree."""
        manifest_bytes, blobs_tar = self.export_archive(label=label, split=split)
        entries = [(MANIFEST_FILE, manifest_bytes)]
        for name, data in _untar(blobs_tar).items():
            entries.append((f"blobs/{name}", data))
        return _det_tar(entries)

    def import_archive(self, manifest_bytes: bytes, blobs_tar: bytes) -> int:
        """Ingest an exported pair; returns the number of new samples.

        Every blob must hash to the id its manifest record claims, and every
        record must have its blob.
        """
        try:
            manifest = DatasetManifest.from_json(json.loads(manifest_bytes))
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad manifest: {exc}") from exc
        blobs = {Path(name).stem: data for name, data in _untar(blobs_tar).items()}
        added = 0
        for record in manifest.samples:
            sample_id = record["id"]
            if sample_id not in blobs:
                raise IntegrityError(f"manifest lists {sample_id} but the archive lacks it")
            data = blobs[sample_id]
            actual = content_id(data)
            if actual != sample_id:
                raise IntegrityError(
                    f"blob named {sample_id} hashes to {actual[:12]}..., refusing import"
                )
        for record in manifest.samples:
            if self.exists(record["id"]):
                continue
            self.add_sample(
                blobs[record["id"]],
                label=record["label"],
                split=record["split"],
                source=record["source"],
                captured_at=from_rfc3339(record["captured_at"]),
                device_label=record.get("device_label"),
                augmentation_of=record.get("augmentation_of"),
            )
            added += 1
        return added

    def import_combined(self, tar_bytes: bytes) -> int:
        members = _untar(tar_bytes)
        if MANIFEST_FILE not in members:
            raise ValidationError(f"archive has no {MANIFEST_FILE}")
        manifest_bytes = members.pop(MANIFEST_FILE)
        blob_entries = [
            (Path(name).name, data)
            for name, data in members.items()
            if name.startswith("blobs/")
        ]
        return self.import_archive(manifest_bytes, _det_tar(blob_entries))
