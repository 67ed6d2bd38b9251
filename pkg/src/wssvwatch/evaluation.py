"""Imbalance-aware evaluation: F1, AUC-ROC, FNR, and stratified splits.

Positive class throughout is the infected one ("wssv"). AUC uses midranks,
so tied scores earn half credit, and fold aggregation reports the population
standard deviation over per-fold values. Split planning is deterministic in
(ids, seed) and keeps per-class proportions by construction.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateMetricWarning,
    StratificationError,
    UndefinedMetricError,
    ValidationError,
)

POSITIVE = "wssv"
NEGATIVE = "healthy"


@dataclass(frozen=True)
class LabeledScore:
    """One scored sample with its ground-truth label."""

    sample_id: str
    truth: str
    score: float

    def __post_init__(self):
        if self.truth not in (POSITIVE, NEGATIVE):
            raise ValidationError(
                f"truth must be {POSITIVE!r} or {NEGATIVE!r}, got {self.truth!r}",
                field="truth",
            )
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(
                f"score {self.score} outside [0, 1]", field="score"
            )


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_json(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion(items: list[LabeledScore], threshold: float = 0.5) -> ConfusionMatrix:
    """Tally calls at the threshold; score equal to threshold calls positive."""
    if not items:
        raise ValidationError("no items to evaluate")
    tp = fp = tn = fn = 0
    for item in items:
        called_positive = item.score >= threshold
        if item.truth == POSITIVE:
            if called_positive:
                tp += 1
            else:
                fn += 1
        else:
            if called_positive:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def f1_score(cm: ConfusionMatrix) -> float:
    """Harmonic mean of precision and recall for the positive class.

    When no positives exist in truth or calls the metric is degenerate;
    returns 0.0 and emits DegenerateMetricWarning rather than raising.
    """
    denom = 2 * cm.tp + cm.fp + cm.fn
    if denom == 0:
        warnings.warn(
            "F1 is degenerate: no positive truths and no positive calls",
            DegenerateMetricWarning,
            stacklevel=2,
        )
        return 0.0
    return 2 * cm.tp / denom


def false_negative_rate(cm: ConfusionMatrix) -> float:
    """Missed infections over actual infections, fn / (fn + tp)."""
    actual_positive = cm.fn + cm.tp
    if actual_positive == 0:
        raise UndefinedMetricError(
            "false negative rate is undefined without positive ground truth"
        )
    return cm.fn / actual_positive


def auc_roc(items: list[LabeledScore]) -> float:
    """Probability a random infected sample outscores a random healthy one.

    Midrank formulation: ties between classes contribute half credit.
    Undefined when either class is absent.
    """
    truths = np.array([item.truth == POSITIVE for item in items], dtype=bool)
    n_pos = int(truths.sum())
    n_neg = len(items) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            "AUC-ROC is undefined unless both classes are present"
        )
    scores = np.array([item.score for item in items], dtype=np.float64)
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[truths].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class SplitAssignment:
    """A train/test partition of sample ids with the parameters that made it."""

    train_ids: list[str]
    test_ids: list[str]
    test_fraction: float
    seed: int

    def to_json(self) -> dict:
        return {
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "test_fraction": self.test_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        return cls(
            train_ids=list(obj["train_ids"]),
            test_ids=list(obj["test_ids"]),
            test_fraction=float(obj["test_fraction"]),
            seed=int(obj["seed"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SplitAssignment":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class FoldPlan:
    """Sample id -> fold index map for k-fold cross validation."""

    k: int
    assignments: dict[str, int]
    seed: int

    def fold_ids(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignments.items() if f == fold)

    def to_json(self) -> dict:
        return {"k": self.k, "assignments": dict(self.assignments), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "FoldPlan":
        return cls(
            k=int(obj["k"]),
            assignments={str(i): int(f) for i, f in obj["assignments"].items()},
            seed=int(obj["seed"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FoldPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _shuffled_class_ids(ids_by_class: dict[str, list[str]], seed: int) -> dict[str, list[str]]:
    """Sort ids within each class, then shuffle with one seeded generator.

    Classes are visited in sorted label order so generator consumption, and
    therefore the whole plan, depends only on (ids, seed).
    """
    rng = np.random.default_rng(seed)
    out = {}
    for label in sorted(ids_by_class):
        ids = sorted(ids_by_class[label])
        if not ids:
            raise StratificationError(f"class {label!r} has no samples")
        perm = rng.permutation(len(ids))
        out[label] = [ids[i] for i in perm]
    return out


def stratified_holdout(
    labels_by_id: dict[str, str], test_fraction: float = 0.2, seed: int = 0
) -> SplitAssignment:
    """Split ids into train/test preserving per-class proportions.

    Per-class test counts round half up, so 411/38 at 0.2 yields an 82+8=90
    sample test side.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValidationError(
            "test_fraction must be strictly inside (0, 1)", field="test_fraction"
        )
    if not labels_by_id:
        raise StratificationError("no samples to split")
    ids_by_class: dict[str, list[str]] = {}
    for sample_id, label in labels_by_id.items():
        ids_by_class.setdefault(label, []).append(sample_id)
    shuffled = _shuffled_class_ids(ids_by_class, seed)
    train_ids: list[str] = []
    test_ids: list[str] = []
    for label in sorted(shuffled):
        ids = shuffled[label]
        n_test = int(np.floor(len(ids) * test_fraction + 0.5))  # round half up
        n_test = min(n_test, len(ids))
        test_ids.extend(ids[:n_test])
        train_ids.extend(ids[n_test:])
    return SplitAssignment(
        train_ids=sorted(train_ids),
        test_ids=sorted(test_ids),
        test_fraction=test_fraction,
        seed=seed,
    )


def stratified_kfold(labels_by_id: dict[str, str], k: int = 5, seed: int = 0) -> FoldPlan:
    """Assign each id a fold, round-robin within each shuffled class.

    Per-class fold sizes differ by at most one; every class must have at
    least k members so no fold goes without it.
    """
    if k < 2:
        raise ValidationError("k must be >= 2", field="k")
    if not labels_by_id:
        raise StratificationError("no samples to split")
    ids_by_class: dict[str, list[str]] = {}
    for sample_id, label in labels_by_id.items():
        ids_by_class.setdefault(label, []).append(sample_id)
    for label in sorted(ids_by_class):
        if len(ids_by_class[label]) < k:
            raise StratificationError(
                f"class {label!r} has {len(ids_by_class[label])} samples, fewer than k={k}"
            )
    shuffled = _shuffled_class_ids(ids_by_class, seed)
    assignments: dict[str, int] = {}
    for label in sorted(shuffled):
        for i, sample_id in enumerate(shuffled[label]):
            assignments[sample_id] = i % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)


METRIC_NAMES = ("f1", "auc_roc", "fnr")


def aggregate_folds(per_fold: list[dict[str, float]]) -> tuple[dict, dict]:
    """Mean and population standard deviation of each metric across folds."""
    if not per_fold:
        raise ValidationError("no fold results to aggregate")
    mean = {}
    stddev = {}
    for name in METRIC_NAMES:
        values = np.array([fold[name] for fold in per_fold], dtype=np.float64)
        mean[name] = float(values.mean())
        stddev[name] = float(values.std())  # population, ddof=0
    return mean, stddev


@dataclass
class MetricsSummary:
    """Per-fold metrics with cross-fold mean and spread."""

    per_fold: list[dict]
    mean: dict
    stddev: dict
    threshold: float

    def to_json(self) -> dict:
        return {
            "per_fold": [dict(f) for f in self.per_fold],
            "mean": dict(self.mean),
            "stddev": dict(self.stddev),
            "threshold": self.threshold,
        }

    def to_text(self) -> str:
        lines = ["fold      f1  auc_roc      fnr"]
        for fold in self.per_fold:
            lines.append(
                f"{fold['fold']:>4}  {fold['f1']:.4f}   {fold['auc_roc']:.4f}   {fold['fnr']:.4f}"
            )
        lines.append(
            f"mean  {self.mean['f1']:.4f}   {self.mean['auc_roc']:.4f}   {self.mean['fnr']:.4f}"
        )
        lines.append(
            f" std  {self.stddev['f1']:.4f}   {self.stddev['auc_roc']:.4f}   {self.stddev['fnr']:.4f}"
        )
        return "\n".join(lines)


def evaluate_fold(items: list[LabeledScore], threshold: float = 0.5) -> dict[str, float]:
    cm = confusion(items, threshold)
    return {
        "f1": f1_score(cm),
        "auc_roc": auc_roc(items),
        "fnr": false_negative_rate(cm),
        "n": cm.total,
    }


def evaluate_run(
    scores_by_fold: dict[int, list[LabeledScore]], k: int, threshold: float = 0.5
) -> MetricsSummary:
    """Evaluate every fold of a k-fold run and aggregate.

    Every fold index in range(k) must be present, and each must contain both
    classes or the undefined-metric error names the offending fold.
    """
    missing = [i for i in range(k) if i not in scores_by_fold]
    if missing:
        raise ValidationError(f"missing results for folds {missing}")
    per_fold = []
    for i in range(k):
        try:
            metrics = evaluate_fold(scores_by_fold[i], threshold)
        except UndefinedMetricError as exc:
            raise UndefinedMetricError(f"fold {i}: {exc}") from exc
        metrics["fold"] = i
        per_fold.append(metrics)
    mean, stddev = aggregate_folds(per_fold)
    return MetricsSummary(per_fold=per_fold, mean=mean, stddev=stddev, threshold=threshold)


def load_labeled_csv(path) -> list[LabeledScore]:
    """Read sample_id,truth,score rows; a header row is recognized and skipped."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row_num, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ValidationError(f"row {row_num}: expected 3 columns, got {len(row)}")
            ident, truth, raw = (cell.strip() for cell in row)
            if row_num == 0 and ident.lower() in ("sample_id", "id", "input_id"):
                continue
            try:
                score = float(raw)
            except ValueError:
                raise ValidationError(f"row {row_num}: score {raw!r} is not a number")
            out.append(LabeledScore(sample_id=ident, truth=truth, score=score))
    if not out:
        raise ValidationError(f"no rows in {path}")
    return out
