"""
Occlusion saliency on a detector with a known sensitive region.

Slides a gray patch over the input, measures the score drop at each
position, and checks the hottest pixel lands inside the square the
model actually looks at.
"""

import tempfile
from pathlib import Path

import numpy as np

from wssvwatch.imaging import encode_png, preprocess
from wssvwatch.inference import load_model, predict, preprocess_config_for
from wssvwatch.saliency import OcclusionConfig, occlusion_saliency, patch_positions, render_overlay
from wssvwatch.toymodels import constant_model, region_sum_model

handle = load_model(region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0))

frame = np.zeros((32, 32, 3), dtype=np.uint8)
frame[8:16, 8:16] = 255
inp = preprocess(frame, preprocess_config_for(handle.metadata))

cfg = OcclusionConfig(patch_side=8, stride=4, fill="gray_128")
positions = patch_positions(32, cfg)
print("patch grid:", len(positions), "positions, so", len(positions) + 1, "forward passes")

sal = occlusion_saliency(handle, inp, cfg)
peak = np.unravel_index(np.argmax(sal.values), sal.values.shape)
print("baseline score %.4f, saliency peak at %s" % (predict(handle, inp).score, peak))
assert 8 <= peak[0] < 16 and 8 <= peak[1] < 16

# a model that ignores its input yields an all-zero map
flat_handle = load_model(constant_model(side=16, logit=0.3))
flat = occlusion_saliency(flat_handle,
                          preprocess(frame, preprocess_config_for(flat_handle.metadata)),
                          OcclusionConfig(patch_side=8, stride=4))
print("constant model map max:", flat.values.max())
assert not flat.values.any()

out = Path(tempfile.mkdtemp(prefix="saldemo_")) / "overlay.png"
out.write_bytes(encode_png(render_overlay(sal, frame)))
print("overlay written to", out)
