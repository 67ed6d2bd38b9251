"""Round trip a toy detector through the bundle format and run it."""

import tempfile
from pathlib import Path

import numpy as np

from wssvwatch.imaging import preprocess
from wssvwatch.inference import (
    load_model,
    predict,
    predict_batch,
    preprocess_config_for,
    read_bundle,
    write_bundle,
)
from wssvwatch.toymodels import region_sum_model

# detector that fires on brightness inside the 8..16 square
bundle = region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0)

workdir = Path(tempfile.mkdtemp(prefix="toydemo_"))
bundle_dir = write_bundle(bundle, workdir / "detector")
reloaded = read_bundle(bundle_dir)
assert reloaded.model_blob == bundle.model_blob
print("bundle round trip ok:", bundle_dir)

handle = load_model(reloaded)
cfg = preprocess_config_for(handle.metadata)

dark = np.zeros((32, 32, 3), dtype=np.uint8)
lit = dark.copy()
lit[8:16, 8:16] = 255

for name, frame in [("dark", dark), ("lit", lit)]:
    pred = predict(handle, preprocess(frame, cfg))
    print(f"{name:>4}: score={pred.score:.4f} decision={pred.decision}")

# batch equals one-at-a-time
inputs = [preprocess(f, cfg) for f in (dark, lit, dark)]
batch = predict_batch(handle, inputs)
singles = [predict(handle, i) for i in inputs]
assert [p.score for p in batch] == [p.score for p in singles]
print("batch path matches single-image path on", len(inputs), "inputs")

# same frame, many calls: the score never wobbles
scores = {predict(handle, preprocess(lit, cfg)).score for _ in range(50)}
assert len(scores) == 1
print("50 repeat predictions, one distinct score:", scores.pop())
