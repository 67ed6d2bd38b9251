"""
Evaluation metrics and stratified splitting at field-survey scale.

The running example is a 449-image pond survey: 411 healthy, 38 infected.
With an 8 percent positive class, accuracy is useless; F1, AUC-ROC and the
false negative rate are what matter, and splits must keep the class ratio.
"""

import numpy as np

from wssvwatch.evaluation import (
    LabeledScore,
    auc_roc,
    confusion,
    evaluate_run,
    f1_score,
    false_negative_rate,
    stratified_holdout,
    stratified_kfold,
)

rng = np.random.default_rng(42)

labels = {}
for i in range(411):
    labels[f"h{i:04d}"] = "healthy"
for i in range(38):
    labels[f"w{i:04d}"] = "wssv"

# a mediocre scorer: infected images tend higher but overlap a lot
def fake_score(label):
    base = 0.62 if label == "wssv" else 0.35
    return float(np.clip(rng.normal(base, 0.18), 0.0, 1.0))

items = [LabeledScore(sid, lab, fake_score(lab)) for sid, lab in labels.items()]

cm = confusion(items, threshold=0.5)
print("confusion:", cm)
print("f1  = %.4f" % f1_score(cm))
print("fnr = %.4f  (missed infections / actual infections)" % false_negative_rate(cm))
print("auc = %.4f" % auc_roc(items))

# 80/20 holdout keeps the imbalance: expect 82 healthy + 8 wssv in test
split = stratified_holdout(labels, test_fraction=0.2, seed=0)
test_wssv = sum(1 for sid in split.test_ids if labels[sid] == "wssv")
print("\nholdout: %d train / %d test, %d wssv in test" %
      (len(split.train_ids), len(split.test_ids), test_wssv))

# 5-fold: every fold gets 7 or 8 of the 38 positives
plan = stratified_kfold(labels, k=5, seed=0)
for fold in range(5):
    ids = plan.fold_ids(fold)
    n_pos = sum(1 for sid in ids if labels[sid] == "wssv")
    print("fold %d: %3d images, %d wssv" % (fold, len(ids), n_pos))

# same seed, same plan
again = stratified_kfold(labels, k=5, seed=0)
assert again.assignments == plan.assignments
print("re-running with seed 0 reproduced the plan exactly")

# cross-validated summary over the folds
by_fold = {f: [it for it in items if plan.assignments[it.sample_id] == f] for f in range(5)}
summary = evaluate_run(by_fold, k=5, threshold=0.5)
print("\n" + summary.to_text())
