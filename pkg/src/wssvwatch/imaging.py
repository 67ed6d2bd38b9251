"""Image decode, preprocessing, and label-preserving augmentation.

Images are RGB uint8 arrays of shape (H, W, 3). Preprocessing crops a square
region of interest, resizes with bilinear interpolation (half-pixel centers),
and normalizes per channel. Augmentation is restricted by construction to
geometry, brightness, and blur: there are no hue/saturation/color-remap
parameters, so color-sensitive disease features cannot be altered.

All functions are pure and deterministic; equal inputs produce byte-identical
outputs.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import gaussian_filter

from .errors import BoundsError, DecodeError, LeakageError, ValidationError
from .records import ImageSample

DEFAULT_TARGET_SIDE = 224

# Conservative sampling ranges for seeded random augmentation specs.
DEFAULT_SPEC_RANGES = {
    "rotation_degrees": (-25.0, 25.0),
    "flip_probability": 0.5,
    "brightness_delta": (-0.2, 0.2),
    "blur_sigma": (0.0, 1.5),
}


def require_image(img: np.ndarray) -> np.ndarray:
    """Validate an (H, W, 3) uint8 image array and return it."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError("image must be at least 1x1")
    return arr


@dataclass
class PreprocessConfig:
    """Crop/resize/normalize settings for turning an image into model input.

    ``roi`` is (left, top, width, height); it must be square because the
    preprocessing contract crops a square region. Normalization maps a raw
    8-bit value v to ``v * scale + offset`` per channel.
    """

    target_side: int = DEFAULT_TARGET_SIDE
    crop_mode: str = "center_square"  # or "explicit_roi"
    roi: tuple[int, int, int, int] | None = None
    scale: tuple[float, float, float] = (1.0 / 255.0,) * 3
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    channel_layout: str = "interleaved"  # or "planar"

    def __post_init__(self):
        if self.target_side < 8:
            raise ValidationError("target_side must be >= 8", field="target_side")
        if self.crop_mode not in ("center_square", "explicit_roi"):
            raise ValidationError(f"unknown crop_mode {self.crop_mode!r}", field="crop_mode")
        if self.crop_mode == "explicit_roi":
            if self.roi is None:
                raise ValidationError("explicit_roi requires a roi rect", field="roi")
            left, top, w, h = self.roi
            if w != h:
                raise ValidationError("roi must be square (width == height)", field="roi")
            if w < 1:
                raise ValidationError("roi side must be >= 1", field="roi")
        if self.channel_layout not in ("interleaved", "planar"):
            raise ValidationError(
                f"unknown channel_layout {self.channel_layout!r}", field="channel_layout"
            )


@dataclass
class ModelInput:
    """Normalized float tensor ready for the model, with source provenance."""

    side: int
    values: np.ndarray  # (side, side, 3) interleaved or (3, side, side) planar
    channel_layout: str = "interleaved"
    provenance: str = "ad-hoc"


@dataclass
class AugmentSpec:
    """One augmentation: rotation, flips, brightness shift, Gaussian blur.

    Deliberately has no color-space fields; transforms apply identical
    coefficients to all three channels.
    """

    rotation_degrees: float = 0.0
    flip_horizontal: bool = False
    flip_vertical: bool = False
    brightness_delta: float = 0.0  # fraction of full scale, additive
    blur_sigma: float = 0.0  # pixels, Gaussian

    _FIELDS = (
        "rotation_degrees",
        "flip_horizontal",
        "flip_vertical",
        "brightness_delta",
        "blur_sigma",
    )

    def validate(self) -> "AugmentSpec":
        if not (0.0 <= self.rotation_degrees < 360.0):
            raise ValidationError(
                "rotation_degrees must be in [0, 360)", field="rotation_degrees"
            )
        if not (-0.5 <= self.brightness_delta <= 0.5):
            raise ValidationError(
                "brightness_delta must be in [-0.5, 0.5]", field="brightness_delta"
            )
        if not (math.isfinite(self.blur_sigma) and self.blur_sigma >= 0.0):
            raise ValidationError("blur_sigma must be finite and >= 0", field="blur_sigma")
        return self

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in self._FIELDS}

    @classmethod
    def from_json(cls, obj: dict) -> "AugmentSpec":
        unknown = set(obj) - set(cls._FIELDS)
        if unknown:
            raise ValidationError(f"unknown AugmentSpec fields: {sorted(unknown)}")
        missing = set(cls._FIELDS) - set(obj)
        if missing:
            raise ValidationError(f"missing AugmentSpec fields: {sorted(missing)}")
        return cls(**obj).validate()

    def is_identity(self) -> bool:
        return (
            self.rotation_degrees == 0.0
            and not self.flip_horizontal
            and not self.flip_vertical
            and self.brightness_delta == 0.0
            and self.blur_sigma == 0.0
        )


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or JPEG bytes into an (H, W, 3) uint8 array.

    An alpha channel, if present, is dropped. Malformed streams raise
    DecodeError naming the stage that failed.
    """
    try:
        im = Image.open(io.BytesIO(data))
    except UnidentifiedImageError as exc:
        raise DecodeError("could not identify image format in header") from exc
    except OSError as exc:
        # e.g. a stream cut off in the middle of a header segment
        raise DecodeError(f"image header parsing failed: {exc}") from exc
    fmt = im.format or "image"
    try:
        im.load()
    except OSError as exc:
        raise DecodeError(f"{fmt} pixel decoding failed: {exc}") from exc
    if im.mode != "RGB":
        im = im.convert("RGB")
    return np.asarray(im, dtype=np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    """Encode an image as PNG with fixed settings (stable bytes for hashing)."""
    arr = require_image(img)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def content_id(data: bytes) -> str:
    """Content hash used as the dataset sample id."""
    return hashlib.sha256(data).hexdigest()


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    in_h, in_w = img.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    def axis_coords(out_n, in_n):
        src = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
        i0 = np.floor(src).astype(np.int64)
        t = src - i0
        lo = np.clip(i0, 0, in_n - 1)
        hi = np.clip(i0 + 1, 0, in_n - 1)
        return lo, hi, t

    y0, y1, ty = axis_coords(out_h, in_h)
    x0, x1, tx = axis_coords(out_w, in_w)
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - tx)[None, :, None] + src[y0][:, x1] * tx[None, :, None]
    bot = src[y1][:, x0] * (1 - tx)[None, :, None] + src[y1][:, x1] * tx[None, :, None]
    out = top * (1 - ty)[:, None, None] + bot * ty[:, None, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _crop(img: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    h, w = img.shape[:2]
    if cfg.crop_mode == "center_square":
        side = min(h, w)
        top = (h - side) // 2
        left = (w - side) // 2
        return img[top : top + side, left : left + side]
    left, top, rw, rh = cfg.roi
    if left < 0 or top < 0 or left + rw > w or top + rh > h:
        raise BoundsError(
            f"roi {cfg.roi} exceeds image bounds {w}x{h}", field="roi"
        )
    return img[top : top + rh, left : left + rw]


def crop_resize(img: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """The geometric half of preprocessing: square crop, then bilinear resize.

    Returned as uint8; useful for rendering overlays in input geometry.
    """
    arr = require_image(img)
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValidationError("image too small to preprocess (side < 2)")
    cropped = _crop(arr, cfg)
    return _resize_bilinear(cropped, cfg.target_side, cfg.target_side)


def preprocess(img: np.ndarray, cfg: PreprocessConfig, provenance: str = "ad-hoc") -> ModelInput:
    """Apply the full preprocessing contract: crop, resize, normalize, lay out.

    Normalization maps raw value v to ``v * scale + offset`` per channel.
    """
    resized = crop_resize(img, cfg)
    scale = np.asarray(cfg.scale, dtype=np.float32).reshape(1, 1, 3)
    offset = np.asarray(cfg.offset, dtype=np.float32).reshape(1, 1, 3)
    values = resized.astype(np.float32) * scale + offset
    if cfg.channel_layout == "planar":
        values = np.ascontiguousarray(values.transpose(2, 0, 1))
    return ModelInput(
        side=cfg.target_side,
        values=values,
        channel_layout=cfg.channel_layout,
        provenance=provenance,
    )


_EXACT_TRIG = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}


def _rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate counter-clockwise about the image center, bilinear sampling.

    Exposed regions replicate edge pixels. Multiples of 90 degrees use exact
    trig so square-image compositions stay byte-exact.
    """
    if degrees == 0.0:
        return img.copy()
    h, w = img.shape[:2]
    if degrees in _EXACT_TRIG:
        cos_t, sin_t = _EXACT_TRIG[degrees]
    else:
        theta = math.radians(degrees)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = h / 2.0, w / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    # Inverse map (image y axis points down, so screen-CCW flips the sign of sin).
    src_x = cos_t * dx - sin_t * dy + cx - 0.5
    src_y = sin_t * dx + cos_t * dy + cy - 0.5
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    tx = (src_x - x0)[..., None]
    ty = (src_y - y0)[..., None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    src = img.astype(np.float64)
    top = src[y0c, x0c] * (1 - tx) + src[y0c, x1c] * tx
    bot = src[y1c, x0c] * (1 - tx) + src[y1c, x1c] * tx
    out = top * (1 - ty) + bot * ty
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def augment(img: np.ndarray, spec: AugmentSpec, seed: int = 0) -> np.ndarray:
    """Apply one augmentation spec; output dimensions equal input dimensions.

    Fixed composition order: rotation, flips, brightness, blur. Deterministic
    for a fixed (spec, seed); the spec fully parameterizes every transform, so
    the seed is accepted for interface stability only.
    """
    arr = require_image(img)
    spec.validate()
    if spec.is_identity():
        return arr.copy()
    out = arr
    if spec.rotation_degrees != 0.0:
        out = _rotate(out, spec.rotation_degrees)
    if spec.flip_horizontal:
        out = out[:, ::-1]
    if spec.flip_vertical:
        out = out[::-1, :]
    if spec.brightness_delta != 0.0:
        shift = int(np.rint(spec.brightness_delta * 255.0))
        out = np.clip(out.astype(np.int16) + shift, 0, 255).astype(np.uint8)
    if spec.blur_sigma > 0.0:
        blurred = gaussian_filter(
            out.astype(np.float64), sigma=(spec.blur_sigma, spec.blur_sigma, 0.0), mode="reflect"
        )
        out = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(out)


def random_specs(count: int, seed: int, ranges: dict | None = None) -> list[AugmentSpec]:
    """Draw ``count`` augmentation specs from the configured ranges, seeded."""
    if count < 0:
        raise ValidationError("count must be >= 0")
    cfg = dict(DEFAULT_SPEC_RANGES)
    if ranges:
        cfg.update(ranges)
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count):
        rot = rng.uniform(*cfg["rotation_degrees"]) % 360.0
        specs.append(
            AugmentSpec(
                rotation_degrees=float(rot),
                flip_horizontal=bool(rng.random() < cfg["flip_probability"]),
                flip_vertical=bool(rng.random() < cfg["flip_probability"]),
                brightness_delta=float(rng.uniform(*cfg["brightness_delta"])),
                blur_sigma=float(rng.uniform(*cfg["blur_sigma"])),
            ).validate()
        )
    return specs


def expand_training_set(
    samples: list[ImageSample],
    per_sample_specs: list[AugmentSpec],
    seed: int = 0,
) -> list[ImageSample]:
    """Return originals plus one augmented copy per (sample, spec) pair.

    Inputs must carry decoded pixels and must not be tagged validation/test
    (leakage guard; callers only ever pass training samples). Augmented copies
    inherit the source label and record their source id in augmentation_of;
    their ids are content hashes of the augmented PNG bytes.
    """
    for spec in per_sample_specs:
        spec.validate()
    out: list[ImageSample] = []
    for sample in samples:
        if sample.split in ("validation", "test"):
            raise LeakageError(
                f"sample {sample.id} is in split {sample.split!r}; "
                "augmentation is restricted to training data"
            )
        if sample.label == "unlabeled":
            raise ValidationError(f"sample {sample.id} has no label")
        if sample.pixels is None:
            raise ValidationError(f"sample {sample.id} carries no pixel data")
        out.append(sample)
        for spec in per_sample_specs:
            pixels = augment(sample.pixels, spec, seed=seed)
            out.append(
                ImageSample(
                    id=content_id(encode_png(pixels)),
                    label=sample.label,
                    split=sample.split,
                    source=sample.source,
                    captured_at=sample.captured_at,
                    device_label=sample.device_label,
                    augmentation_of=sample.id,
                    pixels=pixels,
                )
            )
    return out


def save_spec(spec: AugmentSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=2)
        fh.write("\n")


def load_spec(path) -> AugmentSpec:
    with open(path, encoding="utf-8") as fh:
        return AugmentSpec.from_json(json.load(fh))
