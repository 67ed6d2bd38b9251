"""
Content-addressed sample store walkthrough
==========================================

Images are stored under their sha256, labels carry an audit trail, split
assignment refuses leakage, and export/import round-trips bit for bit.
"""

import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from wssvwatch.datastore import SampleStore
from wssvwatch.evaluation import stratified_holdout
from wssvwatch.imaging import encode_png


def fake_png(seed):
    g = np.random.default_rng(seed)
    return encode_png(g.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))


# frozen clock so exports from different stores can be compared byte-wise
def clock():
    return datetime(2026, 4, 1, tzinfo=timezone.utc)


root = Path(tempfile.mkdtemp(prefix="storedemo_"))
store = SampleStore(root, clock=clock)

records = []
for i in range(6):
    label = "wssv" if i < 2 else "healthy"
    records.append(store.add_sample(fake_png(i), label=label, source="import"))
print("added", store.count(), "samples; ids are content hashes:")
print("  ", records[0].id)

# adding the same bytes again is a no-op that returns the original record
again = store.add_sample(fake_png(0), label="healthy")
assert again.id == records[0].id and again.label == "wssv"
print("duplicate upload deduplicated, original label kept")

# relabel with audit
store.set_label(records[2].id, "wssv", editor="reviewer_1")
trail = store.audit_for(records[2].id)
print("audit trail:", [(row["old_label"], row["new_label"], row["editor"]) for row in trail])

# stratified holdout straight into the store
labels = {r.id: store.get(r.id).label for r in records}
plan = stratified_holdout(labels, test_fraction=0.5, seed=0)
changed = store.assign_splits(plan)
print("assigned splits to", changed, "samples;",
      "reapplying changes", store.assign_splits(plan))

# derived images may not cross into evaluation splits
aug = store.add_sample(fake_png(99), label="wssv", augmentation_of=records[0].id)
print("augmented sample tracked back to", aug.augmentation_of[:12], "...")

# full round trip through the portable archive
combined = store.export_combined()
clone_root = Path(tempfile.mkdtemp(prefix="storeclone_"))
clone = SampleStore(clone_root, clock=clock)
added = clone.import_combined(combined)
print("imported", added, "samples into a fresh store")
assert clone.export_combined() == combined
print("re-export is byte-identical to the original archive")

store.close()
clone.close()
