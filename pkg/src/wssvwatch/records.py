"""Dataset sample records shared by the imaging pipeline and the store."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .errors import ValidationError

LABELS = ("healthy", "wssv", "unlabeled")
SPLITS = ("train", "validation", "test", "unassigned")
SOURCES = ("field_report", "web", "import")


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def to_rfc3339(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat()


def from_rfc3339(text: str) -> datetime:
    return datetime.fromisoformat(text).astimezone(timezone.utc)


@dataclass
class ImageSample:
    """One dataset image: content-hash id plus label/split/provenance metadata.

    ``pixels`` is an optional in-memory decoded array used by the augmentation
    pipeline; it never appears in manifests or store records.
    """

    id: str
    label: str = "unlabeled"
    split: str = "unassigned"
    source: str = "import"
    captured_at: datetime = field(default_factory=utc_now)
    image_ref: str | None = None
    device_label: str | None = None
    augmentation_of: str | None = None
    pixels: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"unknown label {self.label!r}", field="label")
        if self.split not in SPLITS:
            raise ValidationError(f"unknown split {self.split!r}", field="split")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r}", field="source")

    def with_pixels(self, pixels: np.ndarray) -> "ImageSample":
        return replace(self, pixels=pixels)

    def to_record(self) -> dict:
        """Serializable record, without pixel data."""
        return {
            "id": self.id,
            "label": self.label,
            "split": self.split,
            "source": self.source,
            "captured_at": to_rfc3339(self.captured_at),
            "image_ref": self.image_ref,
            "device_label": self.device_label,
            "augmentation_of": self.augmentation_of,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ImageSample":
        return cls(
            id=record["id"],
            label=record["label"],
            split=record["split"],
            source=record["source"],
            captured_at=from_rfc3339(record["captured_at"]),
            image_ref=record.get("image_ref"),
            device_label=record.get("device_label"),
            augmentation_of=record.get("augmentation_of"),
        )
