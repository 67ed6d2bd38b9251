"""Conversion QA: score parity between model builds, plus latency timing."""

import numpy as np

from wssvwatch.imaging import preprocess
from wssvwatch.inference import load_model, preprocess_config_for
from wssvwatch.modelqa import ParityGate, benchmark_latency, compare_outputs, gate_parity
from wssvwatch.toymodels import region_sum_model

# reference scores vs the same inputs through a converted build
reference = [0.5, 0.7, 0.9]
converted = [0.5, 0.72, 0.89]
stats = compare_outputs(reference, converted)
print("abs differences: mean=%.6f min=%.6f max=%.6f stddev=%.10f"
      % (stats.mean, stats.min, stats.max, stats.stddev))

# a deployment gate: mean drift and worst-case drift both bounded
gate = ParityGate(max_tolerance=2e-3, mean_tolerance=1e-4)
verdict = gate_parity(stats, gate)
print("toy example against (max 2e-3, mean 1e-4):", "PASS" if verdict.passed else "FAIL")
for reason in verdict.reasons:
    print("  -", reason)

# numbers shaped like a real int8 conversion run clear the same gate
rng = np.random.default_rng(3)
drift = np.abs(rng.normal(0.0, 4e-5, size=500))
drift[17] = 1.6e-3  # one outlier, still under the max tolerance
run = compare_outputs(np.zeros(500), drift)
print("simulated conversion run: mean=%.2e max=%.2e ->"
      % (run.mean, run.max),
      "PASS" if gate_parity(run, gate).passed else "FAIL")

# timing: warmup runs are excluded from the reported numbers
handle = load_model(region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0))
inp = preprocess(np.zeros((32, 32, 3), dtype=np.uint8), preprocess_config_for(handle.metadata))
lat = benchmark_latency(handle, inp, runs=5, warmup_runs=2, device_label="cpu")
print("\nlatency over %d runs (after %d warmup): mean %.3f ms"
      % (lat.runs, lat.warmup_runs, lat.mean_ms))
print("per run:", ["%.3f" % v for v in lat.per_run_ms])
