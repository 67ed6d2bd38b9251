"""Conversion parity checks and latency benchmarking.

Parity compares per-input scores from a reference model and its converted
counterpart as absolute differences, summarized with population statistics.
A gate turns the summary into a pass/fail verdict with one reason per
violated bound. Benchmarking times repeated forward passes with an
injectable clock so harness behavior is testable without real timers.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BenchmarkError, ValidationError
from .imaging import ModelInput
from .inference import ModelHandle, predict


@dataclass
class ParityStats:
    mean: float
    stddev: float
    min: float
    max: float
    count: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "stddev": self.stddev,
            "min": self.min,
            "max": self.max,
            "count": self.count,
        }


def compare_outputs(reference: "np.ndarray | list", converted: "np.ndarray | list") -> ParityStats:
    """Summarize absolute score differences between two model runs."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    conv = np.asarray(converted, dtype=np.float64).ravel()
    if ref.size == 0:
        raise ValidationError("no scores to compare")
    if ref.size != conv.size:
        raise ValidationError(
            f"score counts differ: {ref.size} reference vs {conv.size} converted"
        )
    if not (np.all(np.isfinite(ref)) and np.all(np.isfinite(conv))):
        raise ValidationError("scores must be finite")
    diff = np.abs(ref - conv)
    return ParityStats(
        mean=float(diff.mean()),
        stddev=float(diff.std()),  # population
        min=float(diff.min()),
        max=float(diff.max()),
        count=int(diff.size),
    )


@dataclass
class ParityGate:
    max_tolerance: float = 2e-3
    mean_tolerance: float = 1e-4

    def __post_init__(self):
        if self.max_tolerance <= 0 or self.mean_tolerance <= 0:
            raise ValidationError("tolerances must be positive")
        if self.mean_tolerance > self.max_tolerance:
            raise ValidationError("mean_tolerance must not exceed max_tolerance")


@dataclass
class ParityVerdict:
    passed: bool
    stats: ParityStats
    gate: ParityGate
    reasons: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "stats": self.stats.to_json(),
            "gate": {
                "max_tolerance": self.gate.max_tolerance,
                "mean_tolerance": self.gate.mean_tolerance,
            },
            "reasons": list(self.reasons),
        }


def gate_parity(stats: ParityStats, gate: ParityGate | None = None) -> ParityVerdict:
    """Judge parity stats against the gate; a reason per violated bound."""
    gate = gate or ParityGate()
    reasons = []
    if stats.max > gate.max_tolerance:
        reasons.append(
            f"max abs difference {stats.max:.6g} exceeds tolerance {gate.max_tolerance:.6g}"
        )
    if stats.mean > gate.mean_tolerance:
        reasons.append(
            f"mean abs difference {stats.mean:.6g} exceeds tolerance {gate.mean_tolerance:.6g}"
        )
    return ParityVerdict(passed=not reasons, stats=stats, gate=gate, reasons=reasons)


@dataclass
class LatencyStats:
    """Per-run wall times in milliseconds for the timed runs only."""

    per_run_ms: list[float]
    mean_ms: float
    runs: int
    warmup_runs: int
    device_label: str

    def to_json(self) -> dict:
        return {
            "per_run_ms": list(self.per_run_ms),
            "mean_ms": self.mean_ms,
            "runs": self.runs,
            "warmup_runs": self.warmup_runs,
            "device_label": self.device_label,
        }


def benchmark_latency(
    handle: ModelHandle,
    inp: ModelInput,
    runs: int = 5,
    warmup_runs: int = 2,
    clock=time.perf_counter,
    device_label: str = "cpu",
) -> LatencyStats:
    """Time repeated predictions, excluding warmup from both stats and clock.

    The handle is reserved for the duration; concurrent predictions see a
    busy error rather than contending for the timer.
    """
    if runs < 1:
        raise ValidationError("runs must be >= 1", field="runs")
    if warmup_runs < 0:
        raise ValidationError("warmup_runs must be >= 0", field="warmup_runs")
    token = handle.reserve_for_benchmark()
    try:
        for i in range(warmup_runs):
            try:
                predict(handle, inp, _benchmark_token=token)
            except Exception as exc:
                raise BenchmarkError(f"warmup run {i} failed: {exc}", run_index=i) from exc
        per_run = []
        for i in range(runs):
            start = clock()
            try:
                predict(handle, inp, _benchmark_token=token)
            except Exception as exc:
                raise BenchmarkError(f"run {i} failed: {exc}", run_index=i) from exc
            per_run.append((clock() - start) * 1000.0)
    finally:
        handle.release_benchmark(token)
    return LatencyStats(
        per_run_ms=per_run,
        mean_ms=float(np.mean(per_run)),
        runs=runs,
        warmup_runs=warmup_runs,
        device_label=device_label,
    )


def load_scores_csv(path) -> dict[str, float]:
    """Read input_id,score rows; a header row is recognized and skipped."""
    out: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row_num, row in enumerate(csv.reader(fh)):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ValidationError(f"row {row_num}: expected 2 columns, got {len(row)}")
            ident, raw = row[0].strip(), row[1].strip()
            if row_num == 0 and ident.lower() in ("input_id", "sample_id", "id"):
                continue
            try:
                score = float(raw)
            except ValueError:
                raise ValidationError(f"row {row_num}: score {raw!r} is not a number")
            if ident in out:
                raise ValidationError(f"duplicate input id {ident!r}")
            out[ident] = score
    if not out:
        raise ValidationError(f"no scores in {path}")
    return out


def align_scores(
    reference: dict[str, float], converted: dict[str, float]
) -> tuple[list[float], list[float]]:
    """Pair two score maps by input id, order-independently."""
    missing = sorted(set(reference) ^ set(converted))
    if missing:
        raise ValidationError(f"input ids not present on both sides: {missing[:5]}")
    ids = sorted(reference)
    return [reference[i] for i in ids], [converted[i] for i in ids]
