"""End-to-end acceptance checks for the library's core guarantees.

Each test prints one summary line, ACCEPTANCE PASS or ACCEPTANCE FAIL with
the check's name, so a plain pytest run doubles as a sign-off report.
"""

import io
import time
from contextlib import contextmanager
from datetime import datetime, timezone

import numpy as np
import pytest
from fastapi.testclient import TestClient

from wssvwatch import toymodels
from wssvwatch.datastore import SampleStore
from wssvwatch.errors import LeakageError
from wssvwatch.evaluation import (
    LabeledScore,
    auc_roc,
    confusion,
    f1_score,
    false_negative_rate,
    stratified_holdout,
    stratified_kfold,
)
from wssvwatch.imaging import (
    AugmentSpec,
    ModelInput,
    augment,
    encode_png,
    preprocess,
)
from wssvwatch.inference import (
    bundle_from_tar,
    bundle_to_tar,
    load_model,
    predict,
    predict_batch,
    preprocess_config_for,
    sigmoid,
)
from wssvwatch.modelqa import (
    ParityGate,
    ParityStats,
    benchmark_latency,
    compare_outputs,
    gate_parity,
)
from wssvwatch.records import ImageSample
from wssvwatch.saliency import OcclusionConfig, occlusion_saliency, patch_positions
from wssvwatch.service import ServiceConfig, create_app


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE FAIL: {name}", flush=True)
        raise
    print(f"\nACCEPTANCE PASS: {name}", flush=True)


def random_scored_items(generator, n, quantize):
    """Random two-class scored sample of size n; quantized scores force ties."""
    truths = generator.integers(0, 2, size=n)
    truths[0], truths[1] = 0, 1  # both classes always present
    if quantize:
        scores = generator.integers(0, 5, size=n) / 4.0
    else:
        scores = generator.random(size=n)
    return [
        LabeledScore(
            sample_id=f"s{i}",
            truth="wssv" if t else "healthy",
            score=float(s),
        )
        for i, (t, s) in enumerate(zip(truths, scores))
    ]


def test_auc_oracle_equivalence():
    with criterion("AUC matches pairwise brute force on 500 random instances"):
        generator = np.random.default_rng(2026)
        started = time.perf_counter()
        for trial in range(500):
            n = int(generator.integers(2, 51))
            items = random_scored_items(generator, n, quantize=trial % 2 == 0)
            pos = [i.score for i in items if i.truth == "wssv"]
            neg = [i.score for i in items if i.truth == "healthy"]
            brute = sum(
                1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg
            ) / (len(pos) * len(neg))
            assert abs(auc_roc(items) - brute) <= 1e-9
        assert time.perf_counter() - started < 10.0


def test_f1_fnr_oracle_equivalence():
    with criterion("F1 and FNR match brute-force confusion tallies on 500 instances"):
        generator = np.random.default_rng(31337)
        for trial in range(500):
            n = int(generator.integers(2, 51))
            items = random_scored_items(generator, n, quantize=trial % 3 == 0)
            threshold = float(generator.integers(1, 10) / 10.0)
            tp = fp = tn = fn = 0
            for item in items:
                called = item.score >= threshold
                if item.truth == "wssv":
                    tp, fn = tp + int(called), fn + int(not called)
                else:
                    fp, tn = fp + int(called), tn + int(not called)
            cm = confusion(items, threshold=threshold)
            assert (cm.tp, cm.fp, cm.tn, cm.fn) == (tp, fp, tn, fn)
            if 2 * tp + fp + fn > 0:
                assert f1_score(cm) == 2 * tp / (2 * tp + fp + fn)
            assert false_negative_rate(cm) == fn / (fn + tp)


def test_stratification_at_survey_scale():
    with criterion("411/38 id set splits 5-fold into {7,8}/{82,83} and 0.2 holdout into 82+8"):
        labels = {f"h{i:04d}": "healthy" for i in range(411)}
        labels.update({f"w{i:04d}": "wssv" for i in range(38)})

        for seed in (0, 7, 123):
            plan = stratified_kfold(labels, k=5, seed=seed)
            assert sorted(plan.assignments) == sorted(labels)
            for fold in range(5):
                ids = plan.fold_ids(fold)
                positives = sum(1 for i in ids if labels[i] == "wssv")
                negatives = len(ids) - positives
                assert positives in (7, 8)
                assert negatives in (82, 83)
            again = stratified_kfold(labels, k=5, seed=seed)
            assert again.assignments == plan.assignments

            holdout = stratified_holdout(labels, test_fraction=0.2, seed=seed)
            assert len(holdout.test_ids) == 90
            assert sum(1 for i in holdout.test_ids if labels[i] == "wssv") == 8
            assert sum(1 for i in holdout.test_ids if labels[i] == "healthy") == 82
            assert sorted(holdout.train_ids + holdout.test_ids) == sorted(labels)
            repeat = stratified_holdout(labels, test_fraction=0.2, seed=seed)
            assert repeat.test_ids == holdout.test_ids


def test_parity_worked_example_and_gate():
    with criterion("conversion parity stats match the worked example and the gate splits fixtures"):
        stats = compare_outputs([0.5, 0.7, 0.9], [0.5, 0.72, 0.89])
        assert stats.mean == pytest.approx(0.01, abs=1e-12)
        assert stats.min == 0.0
        assert stats.max == pytest.approx(0.02, abs=1e-12)
        assert stats.stddev == pytest.approx(0.0081649658092772603, abs=1e-12)

        gate = ParityGate(max_tolerance=2e-3, mean_tolerance=1e-4)
        good = ParityStats(mean=3.63e-05, stddev=1e-4, min=0.0, max=1.65e-03, count=100)
        verdict = gate_parity(good, gate)
        assert verdict.passed and verdict.reasons == []

        bad = ParityStats(mean=3.63e-05, stddev=1e-4, min=0.0, max=2.5e-03, count=100)
        verdict = gate_parity(bad, gate)
        assert not verdict.passed
        assert any("max" in reason for reason in verdict.reasons)


def test_toy_end_to_end_inference():
    with criterion("toy bundle round-trips and predicts bit-identically with positive ties"):
        bundle = toymodels.region_sum_model(
            side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0
        )
        handle = load_model(bundle_from_tar(bundle_to_tar(bundle)))

        generator = np.random.default_rng(99)
        img = generator.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
        inp = preprocess(img, preprocess_config_for(handle.metadata))
        scores = {predict(handle, inp).score for _ in range(100)}
        assert len(scores) == 1

        assert sigmoid(0.0) == 0.5

        inputs = [
            preprocess(
                generator.integers(0, 256, size=(32, 32, 3), dtype=np.uint8),
                preprocess_config_for(handle.metadata),
            )
            for _ in range(6)
        ]
        batch = predict_batch(handle, inputs)
        singles = [predict(handle, one) for one in inputs]
        assert [p.score for p in batch] == [p.score for p in singles]

        tie_handle = load_model(toymodels.constant_model(side=16, logit=0.0))
        tie_inp = ModelInput(
            side=16,
            values=np.zeros((3, 16, 16), dtype=np.float32),
            channel_layout="planar",
        )
        tie = predict(tie_handle, tie_inp)
        assert tie.score == 0.5
        assert tie.decision == "wssv"


def test_saliency_properties():
    with criterion("saliency: constant model flat, argmax in the sensitive region, passes counted"):
        cfg = OcclusionConfig(patch_side=16, stride=8, fill="gray_128")

        flat_handle = load_model(toymodels.constant_model(side=32, logit=0.4))
        flat_inp = ModelInput(
            side=32,
            values=np.zeros((3, 32, 32), dtype=np.float32),
            channel_layout="planar",
        )
        flat_map = occlusion_saliency(flat_handle, flat_inp, cfg)
        assert np.all(flat_map.values == 0.0)

        region = (8, 8, 8, 8)  # left, top, width, height
        handle = load_model(
            toymodels.region_sum_model(side=32, region=region, weight=0.05, bias=-2.0)
        )
        values = np.zeros((3, 32, 32), dtype=np.float32)
        values[:, 8:16, 8:16] = 1.0
        inp = ModelInput(side=32, values=values, channel_layout="planar")
        # patches smaller than the sensitive square, so only the centered
        # patch blanks it completely and the peak cannot drift to an edge
        fine = OcclusionConfig(patch_side=8, stride=4, fill="gray_128")

        calls = {"n": 0}
        inner = handle.forward

        def counting_forward(vals):
            calls["n"] += 1
            return inner(vals)

        handle.forward = counting_forward
        try:
            sal_map = occlusion_saliency(handle, inp, fine)
        finally:
            handle.forward = inner
        positions = patch_positions(32, fine)
        assert calls["n"] == len(positions) + 1

        peak = np.unravel_index(np.argmax(sal_map.values), sal_map.values.shape)
        assert 8 <= peak[0] < 16 and 8 <= peak[1] < 16

        # brute-force enumeration with the same fill agrees on the best patch
        baseline = predict(handle, inp).score
        fill_value = 128.0 / 255.0
        best_pos, best_drop = None, -1.0
        for y, x in positions:
            occluded = values.copy()
            occluded[:, y : y + 8, x : x + 8] = fill_value
            drop = baseline - predict(
                handle, ModelInput(side=32, values=occluded, channel_layout="planar")
            ).score
            if drop > best_drop:
                best_pos, best_drop = (y, x), drop
        assert best_pos == (8, 8)
        assert best_pos[0] <= peak[0] < best_pos[0] + 8
        assert best_pos[1] <= peak[1] < best_pos[1] + 8


def test_latency_harness():
    with criterion("fake-clock benchmark yields [10,12,11,9,13] -> mean 11.0 with 5 runs, 2 warm-ups"):
        handle = load_model(toymodels.constant_model(side=16, logit=0.2))
        inp = ModelInput(
            side=16,
            values=np.zeros((3, 16, 16), dtype=np.float32),
            channel_layout="planar",
        )

        intervals_s = [0.010, 0.012, 0.011, 0.009, 0.013]
        ticks = [0.0]
        for gap in intervals_s:
            ticks.append(ticks[-1] + gap)
            ticks.append(ticks[-1])
        ticks.pop()
        clock_calls = {"n": 0}

        def fake_clock():
            value = ticks[clock_calls["n"]]
            clock_calls["n"] += 1
            return value

        calls = {"n": 0}
        inner = handle.forward

        def counting_forward(vals):
            calls["n"] += 1
            return inner(vals)

        handle.forward = counting_forward
        try:
            stats = benchmark_latency(handle, inp, clock=fake_clock)
        finally:
            handle.forward = inner

        assert stats.per_run_ms == pytest.approx([10.0, 12.0, 11.0, 9.0, 13.0], abs=1e-9)
        assert stats.mean_ms == pytest.approx(11.0, abs=1e-9)
        assert stats.runs == 5
        assert stats.warmup_runs == 2
        assert calls["n"] == 7  # warm-ups run but stay untimed
        assert clock_calls["n"] == 10


def test_augmentation_identities():
    with criterion("flip/rotation/identity round-trips are byte-exact and leakage is blocked"):
        generator = np.random.default_rng(5)
        img = generator.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)

        both_flips = AugmentSpec(flip_horizontal=True, flip_vertical=True)
        assert np.array_equal(augment(augment(img, both_flips), both_flips), img)

        quarter = AugmentSpec(rotation_degrees=90.0)
        turned = img
        for _ in range(4):
            turned = augment(turned, quarter)
        assert np.array_equal(turned, img)

        assert np.array_equal(augment(img, AugmentSpec()), img)
        assert encode_png(augment(img, AugmentSpec())) == encode_png(img)

        store = SampleStore(_tmp_dir("leakage"))
        source = store.add_sample(encode_png(img), label="wssv", split="train")
        with pytest.raises(LeakageError):
            store.add_sample(
                encode_png(augment(img, both_flips)),
                label="wssv",
                split="test",
                augmentation_of=source.id,
            )
        with pytest.raises(LeakageError):
            store.add_sample(
                encode_png(augment(img, quarter)),
                label="wssv",
                split="validation",
                augmentation_of=source.id,
            )


def _tmp_dir(tag):
    import tempfile

    return tempfile.mkdtemp(prefix=f"wssvwatch-accept-{tag}-")


def test_service_round_trips():
    with criterion("service flow: predict/report field-identical, export bit-exact, one active model"):
        def fixed_clock():
            return datetime(2026, 3, 10, 8, 0, 0, tzinfo=timezone.utc)

        config = ServiceConfig(data_dir=_tmp_dir("service"))
        client = TestClient(create_app(config, clock=fixed_clock))

        tar_a = bundle_to_tar(
            toymodels.region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0)
        )
        tar_b = bundle_to_tar(
            toymodels.region_sum_model(side=32, region=(8, 8, 8, 8), weight=0.02, bias=-2.0)
        )
        id_a = client.post(
            "/api/v1/models", files={"bundle": ("a.tar", tar_a, "application/x-tar")}
        ).json()["id"]
        id_b = client.post(
            "/api/v1/models", files={"bundle": ("b.tar", tar_b, "application/x-tar")}
        ).json()["id"]

        # interleaved activations always leave exactly one model active
        for target in (id_a, id_b, id_a):
            client.post(f"/api/v1/models/{target}/activate")
            entries = client.get("/api/v1/models").json()["models"]
            assert [e["id"] for e in entries if e["active"]] == [target]

        png = encode_png(np.full((32, 32, 3), 250, dtype=np.uint8))
        predicted = client.post(
            "/api/v1/predict", files={"image": ("pond.png", png, "image/png")}
        )
        assert predicted.status_code == 200
        pred = predicted.json()
        assert pred["decision"] == "wssv"

        draft = {
            "location": {"latitude": -6.2, "longitude": 106.8, "source": "device"},
            "images": [
                {
                    "sample_id": pred["sample_id"],
                    "prediction": {"score": pred["score"], "decision": pred["decision"]},
                }
            ],
            "submitter": "acceptance",
        }
        submitted = client.post("/api/v1/reports", json=draft)
        assert submitted.status_code == 201
        fetched = client.get(f"/api/v1/reports/{submitted.json()['id']}")
        assert fetched.json() == submitted.json()

        exported = client.get("/api/v1/dataset/export").content
        other = SampleStore(_tmp_dir("import"), clock=fixed_clock)
        assert other.import_combined(exported) == 1
        assert other.export_combined() == exported
