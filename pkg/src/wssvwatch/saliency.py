"""Occlusion saliency: forward-pass-only attribution and red-blue overlays.

Slides a fill patch over the model input; the score drop at each patch
position, clipped at zero, measures how much that region supports the
positive call. Per-pixel importance is averaged over covering patches and
min-max normalized, so a model whose score never moves yields an all-zero
map. Patch evaluations are independent of order (pure reduction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .imaging import ModelInput, require_image
from .inference import ModelHandle, predict

OVERLAY_ALPHA = 0.45


@dataclass
class OcclusionConfig:
    patch_side: int = 16
    stride: int = 8
    fill: str = "mean_color"  # or "gray_128"
    target_class: str = "wssv"

    def __post_init__(self):
        if self.stride < 1:
            raise ValidationError("stride must be >= 1", field="stride")
        if self.patch_side < self.stride:
            raise ValidationError("stride must not exceed patch_side", field="stride")
        if self.fill not in ("mean_color", "gray_128"):
            raise ValidationError(f"unknown fill {self.fill!r}", field="fill")
        if self.target_class != "wssv":
            raise ValidationError("target_class must be 'wssv'", field="target_class")


@dataclass
class SaliencyMap:
    """Normalized per-pixel importance in [0, 1] plus the unoccluded score."""

    side: int
    values: np.ndarray  # (side, side) float64 in [0, 1]
    baseline_score: float

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "baseline_score": self.baseline_score,
            "values": [float(v) for v in self.values.ravel()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SaliencyMap":
        side = int(obj["side"])
        values = np.asarray(obj["values"], dtype=np.float64).reshape(side, side)
        return cls(side=side, values=values, baseline_score=float(obj["baseline_score"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")


def patch_positions(side: int, cfg: OcclusionConfig) -> list[tuple[int, int]]:
    """(top, left) anchors of every patch the sweep evaluates."""
    starts = range(0, side - cfg.patch_side + 1, cfg.stride)
    return [(y, x) for y in starts for x in starts]


def _fill_values(inp: ModelInput, handle: ModelHandle, cfg: OcclusionConfig) -> np.ndarray:
    """Per-channel fill in normalized units, shaped for the input layout."""
    values = np.asarray(inp.values)
    channel_axis = 0 if inp.channel_layout == "planar" else 2
    if cfg.fill == "mean_color":
        axes = tuple(a for a in range(3) if a != channel_axis)
        fill = values.mean(axis=axes)
    else:
        scale = np.asarray(handle.metadata.scale, dtype=np.float64)
        offset = np.asarray(handle.metadata.offset, dtype=np.float64)
        fill = 128.0 * scale + offset
    shape = [1, 1, 1]
    shape[channel_axis] = 3
    return fill.astype(values.dtype).reshape(shape)


def _occlude(inp: ModelInput, top: int, left: int, patch: int, fill: np.ndarray) -> ModelInput:
    values = np.array(inp.values, copy=True)
    if inp.channel_layout == "planar":
        values[:, top : top + patch, left : left + patch] = fill
    else:
        values[top : top + patch, left : left + patch, :] = fill
    return ModelInput(
        side=inp.side,
        values=values,
        channel_layout=inp.channel_layout,
        provenance=inp.provenance,
    )


def occlusion_saliency(
    handle: ModelHandle, inp: ModelInput, cfg: OcclusionConfig | None = None
) -> SaliencyMap:
    """Sweep an occluding patch over the input and map the score drops.

    Runs exactly len(patch_positions) + 1 forward passes: one baseline plus
    one per patch position.
    """
    cfg = cfg or OcclusionConfig()
    side = inp.side
    if cfg.patch_side > side:
        raise ValidationError(
            f"patch_side {cfg.patch_side} exceeds input side {side}", field="patch_side"
        )
    baseline = predict(handle, inp).score
    fill = _fill_values(inp, handle, cfg)
    importance_sum = np.zeros((side, side), dtype=np.float64)
    cover_count = np.zeros((side, side), dtype=np.float64)
    for top, left in patch_positions(side, cfg):
        occluded_score = predict(handle, _occlude(inp, top, left, cfg.patch_side, fill)).score
        importance = max(0.0, baseline - occluded_score)
        importance_sum[top : top + cfg.patch_side, left : left + cfg.patch_side] += importance
        cover_count[top : top + cfg.patch_side, left : left + cfg.patch_side] += 1.0
    covered = cover_count > 0
    grid = np.zeros((side, side), dtype=np.float64)
    grid[covered] = importance_sum[covered] / cover_count[covered]
    lo, hi = grid.min(), grid.max()
    if hi > lo:
        grid = (grid - lo) / (hi - lo)
    else:
        grid = np.zeros_like(grid)  # constant importance normalizes to all-zero
    return SaliencyMap(side=side, values=grid, baseline_score=baseline)


def render_overlay(sal_map: SaliencyMap, img: np.ndarray) -> np.ndarray:
    """Blend a blue(0) -> red(1) colormap over the image at fixed alpha."""
    arr = require_image(img)
    h, w = arr.shape[:2]
    if (h, w) != (sal_map.side, sal_map.side):
        raise ValidationError(
            f"image is {w}x{h} but the saliency map side is {sal_map.side}"
        )
    v = sal_map.values[..., None]
    color = np.concatenate(
        [255.0 * v, np.zeros_like(v), 255.0 * (1.0 - v)], axis=2
    )
    blended = (1.0 - OVERLAY_ALPHA) * arr.astype(np.float64) + OVERLAY_ALPHA * color
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)
