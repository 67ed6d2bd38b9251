"""Command line: exit codes, JSON purity, file outputs, dataset flow."""

import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from wssvwatch import toymodels
from wssvwatch.cli import main
from wssvwatch.imaging import decode_image, encode_png
from wssvwatch.inference import write_bundle

SIGMOID_NEG2 = 1.0 / (1.0 + math.exp(2.0))


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def bundle_dir(tmp_path):
    bundle = toymodels.region_sum_model(
        side=32, region=(8, 8, 8, 8), weight=0.05, bias=-2.0
    )
    return str(write_bundle(bundle, tmp_path / "bundle"))


@pytest.fixture
def black_png(tmp_path):
    path = tmp_path / "black.png"
    path.write_bytes(encode_png(np.zeros((32, 32, 3), dtype=np.uint8)))
    return str(path)


def labeled_manifest_json(path, n_healthy=411, n_wssv=38):
    samples = [{"id": f"h{i:04d}", "label": "healthy"} for i in range(n_healthy)]
    samples += [{"id": f"w{i:04d}", "label": "wssv"} for i in range(n_wssv)]
    obj = {
        "schema_version": "1",
        "created_at": "2026-03-01T00:00:00+00:00",
        "counts": {"healthy": n_healthy, "wssv": n_wssv},
        "samples": samples,
    }
    path.write_text(json.dumps(obj))
    return str(path)


class TestPredictCommand:
    def test_human_output(self, runner, bundle_dir, black_png):
        result = runner.invoke(main, ["predict", "--bundle", bundle_dir, "--image", black_png])
        assert result.exit_code == 0, result.output
        assert "decision   healthy" in result.output

    def test_json_output(self, runner, bundle_dir, black_png):
        result = runner.invoke(
            main, ["predict", "--bundle", bundle_dir, "--image", black_png, "--json"]
        )
        assert result.exit_code == 0
        body = json.loads(result.stdout)
        assert body["score"] == pytest.approx(SIGMOID_NEG2, abs=1e-6)
        assert body["decision"] == "healthy"

    def test_roi_crop(self, runner, bundle_dir, tmp_path, make_image):
        path = tmp_path / "wide.png"
        path.write_bytes(encode_png(make_image(64, 96)))
        result = runner.invoke(
            main,
            ["predict", "--bundle", bundle_dir, "--image", str(path), "--roi", "10,10,32,32", "--json"],
        )
        assert result.exit_code == 0
        assert json.loads(result.stdout)["input_provenance"] == "wide.png"

    def test_bad_roi_is_usage_error(self, runner, bundle_dir, black_png):
        result = runner.invoke(
            main, ["predict", "--bundle", bundle_dir, "--image", black_png, "--roi", "1,2,3"]
        )
        assert result.exit_code == 2

    def test_corrupt_image_is_domain_error(self, runner, bundle_dir, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not a png")
        result = runner.invoke(
            main, ["predict", "--bundle", bundle_dir, "--image", str(bad)]
        )
        assert result.exit_code == 1
        err_lines = [l for l in result.stderr.splitlines() if l.strip()]
        assert len(err_lines) == 1
        assert "DecodeError" in err_lines[0]

    def test_unknown_flag(self, runner, bundle_dir, black_png):
        result = runner.invoke(
            main, ["predict", "--bundle", bundle_dir, "--image", black_png, "--fast"]
        )
        assert result.exit_code == 2

    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0


class TestSaliencyCommand:
    def test_writes_overlay_and_map(self, runner, bundle_dir, black_png, tmp_path):
        out = tmp_path / "overlay.png"
        map_path = tmp_path / "map.json"
        result = runner.invoke(
            main,
            [
                "saliency", "--bundle", bundle_dir, "--image", black_png,
                "--out", str(out), "--map", str(map_path), "--json",
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.stdout)
        # 32px input, 16px patch, stride 8: 3x3 grid plus the baseline pass
        assert body["forward_passes"] == 10
        assert decode_image(out.read_bytes()).shape == (32, 32, 3)
        saved = json.loads(map_path.read_text())
        assert saved["side"] == 32

    def test_patch_larger_than_input_fails(self, runner, bundle_dir, black_png, tmp_path):
        result = runner.invoke(
            main,
            [
                "saliency", "--bundle", bundle_dir, "--image", black_png,
                "--out", str(tmp_path / "o.png"), "--patch", "64",
            ],
        )
        assert result.exit_code == 1
        assert "ValidationError" in result.stderr


class TestEvaluateCommand:
    def write_fold(self, path, rows):
        path.write_text(
            "sample_id,truth,score\n"
            + "\n".join(f"{i},{t},{s}" for i, t, s in rows)
            + "\n"
        )
        return str(path)

    def test_two_folds(self, runner, tmp_path):
        f0 = self.write_fold(
            tmp_path / "f0.csv",
            [("a", "wssv", 0.9), ("b", "wssv", 0.4), ("c", "healthy", 0.2)],
        )
        f1 = self.write_fold(
            tmp_path / "f1.csv",
            [("d", "wssv", 0.8), ("e", "healthy", 0.3), ("f", "healthy", 0.6)],
        )
        result = runner.invoke(
            main, ["evaluate", "--scores", f0, "--scores", f1, "--json"]
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.stdout)
        assert len(body["per_fold"]) == 2
        assert set(body["mean"]) == {"f1", "auc_roc", "fnr"}

    def test_human_table(self, runner, tmp_path):
        f0 = self.write_fold(
            tmp_path / "f0.csv", [("a", "wssv", 0.9), ("c", "healthy", 0.2)]
        )
        result = runner.invoke(main, ["evaluate", "--scores", f0])
        assert result.exit_code == 0
        assert "fold" in result.output and "mean" in result.output

    def test_single_class_fold_fails(self, runner, tmp_path):
        f0 = self.write_fold(
            tmp_path / "f0.csv", [("a", "wssv", 0.9), ("b", "wssv", 0.4)]
        )
        result = runner.invoke(main, ["evaluate", "--scores", f0])
        assert result.exit_code == 1
        assert "UndefinedMetricError" in result.stderr

    def test_missing_file_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(
            main, ["evaluate", "--scores", str(tmp_path / "absent.csv")]
        )
        assert result.exit_code == 2


class TestSplitCommands:
    def test_holdout_at_survey_scale(self, runner, tmp_path):
        manifest = labeled_manifest_json(tmp_path / "m.json")
        out = tmp_path / "plan.json"
        result = runner.invoke(
            main,
            ["holdout", "--manifest", manifest, "--fraction", "0.2", "--seed", "3", "--out", str(out), "--json"],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.stdout)
        assert body["test"] == 90
        assert body["train"] == 359
        plan = json.loads(out.read_text())
        test_wssv = [i for i in plan["test_ids"] if i.startswith("w")]
        assert len(test_wssv) == 8

    def test_kfold_at_survey_scale(self, runner, tmp_path):
        manifest = labeled_manifest_json(tmp_path / "m.json")
        out = tmp_path / "folds.json"
        result = runner.invoke(
            main,
            ["kfold", "--manifest", manifest, "--k", "5", "--seed", "0", "--out", str(out), "--json"],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.stdout)
        assert sum(body["fold_sizes"]) == 449
        plan = json.loads(out.read_text())
        for fold in range(5):
            wssv_here = [
                i for i, f in plan["assignments"].items() if f == fold and i.startswith("w")
            ]
            assert len(wssv_here) in (7, 8)

    def test_kfold_deterministic(self, runner, tmp_path):
        manifest = labeled_manifest_json(tmp_path / "m.json")
        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (out_a, out_b):
            result = runner.invoke(
                main, ["kfold", "--manifest", manifest, "--seed", "9", "--out", str(out)]
            )
            assert result.exit_code == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_small_class_fails_cleanly(self, runner, tmp_path):
        manifest = labeled_manifest_json(tmp_path / "m.json", n_healthy=10, n_wssv=3)
        result = runner.invoke(
            main, ["kfold", "--manifest", manifest, "--k", "5", "--out", str(tmp_path / "p.json")]
        )
        assert result.exit_code == 1
        assert "StratificationError" in result.stderr

    def test_augmented_rows_excluded(self, runner, tmp_path):
        obj = {
            "schema_version": "1",
            "created_at": "2026-03-01T00:00:00+00:00",
            "counts": {"healthy": 2, "wssv": 2},
            "samples": [
                {"id": "h0", "label": "healthy"},
                {"id": "h1", "label": "healthy", "augmentation_of": "h0"},
                {"id": "w0", "label": "wssv"},
                {"id": "w1", "label": "wssv"},
            ],
        }
        manifest = tmp_path / "m.json"
        manifest.write_text(json.dumps(obj))
        out = tmp_path / "plan.json"
        result = runner.invoke(
            main,
            ["holdout", "--manifest", str(manifest), "--fraction", "0.5", "--out", str(out), "--json"],
        )
        assert result.exit_code == 0, result.output
        plan = json.loads(out.read_text())
        assert "h1" not in plan["train_ids"] + plan["test_ids"]


class TestAugmentCommand:
    def test_deterministic_outputs(self, runner, tmp_path, make_image):
        src = tmp_path / "src.png"
        src.write_bytes(encode_png(make_image(40, 40)))
        for name in ("out_a", "out_b"):
            result = runner.invoke(
                main,
                ["augment", "--image", str(src), "--out", str(tmp_path / name), "--count", "3", "--seed", "5"],
            )
            assert result.exit_code == 0, result.output
        for i in range(3):
            a = (tmp_path / "out_a" / f"aug_{i:03d}.png").read_bytes()
            b = (tmp_path / "out_b" / f"aug_{i:03d}.png").read_bytes()
            assert a == b
        specs = json.loads((tmp_path / "out_a" / "specs.json").read_text())
        assert len(specs) == 3

    def test_identity_spec_round_trips(self, runner, tmp_path, make_image):
        src = tmp_path / "src.png"
        src.write_bytes(encode_png(make_image(24, 24)))
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(
            json.dumps(
                {
                    "rotation_degrees": 0.0,
                    "flip_horizontal": False,
                    "flip_vertical": False,
                    "brightness_delta": 0.0,
                    "blur_sigma": 0.0,
                }
            )
        )
        result = runner.invoke(
            main,
            ["augment", "--image", str(src), "--out", str(tmp_path / "out"), "--spec", str(spec_path)],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "aug_000.png").read_bytes() == src.read_bytes()


class TestParityCommand:
    def write_scores(self, path, pairs):
        path.write_text(
            "input_id,score\n" + "\n".join(f"{i},{s}" for i, s in pairs) + "\n"
        )
        return str(path)

    def test_pass(self, runner, tmp_path):
        ref = self.write_scores(tmp_path / "ref.csv", [("a", 0.5), ("b", 0.7)])
        cand = self.write_scores(tmp_path / "cand.csv", [("a", 0.50001), ("b", 0.70001)])
        result = runner.invoke(main, ["parity", "--reference", ref, "--candidate", cand])
        assert result.exit_code == 0, result.output
        assert "gate PASS" in result.output

    def test_fail_exits_one_with_report(self, runner, tmp_path):
        ref = self.write_scores(tmp_path / "ref.csv", [("a", 0.5), ("b", 0.7)])
        cand = self.write_scores(tmp_path / "cand.csv", [("a", 0.51), ("b", 0.7)])
        result = runner.invoke(main, ["parity", "--reference", ref, "--candidate", cand])
        assert result.exit_code == 1
        assert "gate FAIL" in result.output
        assert "max" in result.output

    def test_json_verdict(self, runner, tmp_path):
        ref = self.write_scores(tmp_path / "ref.csv", [("a", 0.5)])
        cand = self.write_scores(tmp_path / "cand.csv", [("a", 0.5)])
        result = runner.invoke(
            main, ["parity", "--reference", ref, "--candidate", cand, "--json"]
        )
        assert result.exit_code == 0
        body = json.loads(result.stdout)
        assert body["passed"] is True
        assert body["stats"]["count"] == 1

    def test_mismatched_ids(self, runner, tmp_path):
        ref = self.write_scores(tmp_path / "ref.csv", [("a", 0.5)])
        cand = self.write_scores(tmp_path / "cand.csv", [("zz", 0.5)])
        result = runner.invoke(main, ["parity", "--reference", ref, "--candidate", cand])
        assert result.exit_code == 1
        assert "ValidationError" in result.stderr


class TestBenchCommand:
    def test_runs(self, runner, bundle_dir, black_png):
        result = runner.invoke(
            main,
            ["bench", "--bundle", bundle_dir, "--image", black_png, "--runs", "2", "--warmup", "1", "--json"],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.stdout)
        assert len(body["per_run_ms"]) == 2
        assert body["warmup_runs"] == 1
        assert body["device_label"] == "cpu"


class TestDatasetCommands:
    def add_images(self, runner, root, tmp_path, make_image):
        paths = []
        for i, label in enumerate(["healthy", "healthy", "wssv", "wssv"]):
            p = tmp_path / f"img{i}.png"
            p.write_bytes(encode_png(make_image(16 + i, 16 + i)))
            result = runner.invoke(
                main, ["dataset", "add", "--root", root, "--label", label, str(p), "--json"]
            )
            assert result.exit_code == 0, result.output
            paths.append(json.loads(result.stdout)["added"][0]["id"])
        return paths

    def test_full_flow(self, runner, tmp_path, make_image):
        root = str(tmp_path / "store")
        ids = self.add_images(runner, root, tmp_path, make_image)

        listing = runner.invoke(main, ["dataset", "list", "--root", root, "--json"])
        assert len(json.loads(listing.stdout)["samples"]) == 4

        relabel = runner.invoke(
            main, ["dataset", "label", "--root", root, ids[0], "wssv", "--json"]
        )
        assert relabel.exit_code == 0
        assert json.loads(relabel.stdout)["label"] == "wssv"
        runner.invoke(main, ["dataset", "label", "--root", root, ids[0], "healthy"])

        # split plan comes from the exported manifest, then applies back
        export_dir = tmp_path / "exported"
        exported = runner.invoke(
            main, ["dataset", "export", "--root", root, "--out", str(export_dir)]
        )
        assert exported.exit_code == 0, exported.output
        plan_path = tmp_path / "plan.json"
        held = runner.invoke(
            main,
            ["holdout", "--manifest", str(export_dir / "manifest.json"), "--fraction", "0.5", "--out", str(plan_path)],
        )
        assert held.exit_code == 0, held.output
        applied = runner.invoke(
            main, ["dataset", "assign-splits", "--root", root, "--plan", str(plan_path), "--json"]
        )
        assert applied.exit_code == 0, applied.output
        assert json.loads(applied.stdout)["changed"] == 4
        test_side = runner.invoke(
            main, ["dataset", "list", "--root", root, "--split", "test", "--json"]
        )
        assert len(json.loads(test_side.stdout)["samples"]) == 2

    def test_tar_export_import(self, runner, tmp_path, make_image):
        root = str(tmp_path / "store")
        self.add_images(runner, root, tmp_path, make_image)
        tar_path = tmp_path / "dump.tar"
        exported = runner.invoke(
            main, ["dataset", "export", "--root", root, "--out", str(tar_path)]
        )
        assert exported.exit_code == 0, exported.output
        assert tar_path.exists()
        imported = runner.invoke(
            main,
            ["dataset", "import", "--root", str(tmp_path / "other"), str(tar_path), "--json"],
        )
        assert imported.exit_code == 0, imported.output
        assert json.loads(imported.stdout)["added"] == 4
        relisted = runner.invoke(
            main, ["dataset", "list", "--root", str(tmp_path / "other"), "--json"]
        )
        original = runner.invoke(main, ["dataset", "list", "--root", root, "--json"])
        assert [s["id"] for s in json.loads(relisted.stdout)["samples"]] == [
            s["id"] for s in json.loads(original.stdout)["samples"]
        ]

    def test_pair_import(self, runner, tmp_path, make_image):
        root = str(tmp_path / "store")
        self.add_images(runner, root, tmp_path, make_image)
        export_dir = tmp_path / "exported"
        runner.invoke(main, ["dataset", "export", "--root", root, "--out", str(export_dir)])
        imported = runner.invoke(
            main,
            [
                "dataset", "import", "--root", str(tmp_path / "other"),
                "--manifest", str(export_dir / "manifest.json"),
                "--blobs", str(export_dir / "blobs.tar"), "--json",
            ],
        )
        assert imported.exit_code == 0, imported.output
        assert json.loads(imported.stdout)["added"] == 4

    def test_import_needs_a_source(self, runner, tmp_path):
        result = runner.invoke(
            main, ["dataset", "import", "--root", str(tmp_path / "other")]
        )
        assert result.exit_code == 2

    def test_bad_label_fails(self, runner, tmp_path, make_image):
        root = str(tmp_path / "store")
        ids = self.add_images(runner, root, tmp_path, make_image)
        result = runner.invoke(main, ["dataset", "label", "--root", root, ids[0], "sick"])
        assert result.exit_code == 1
        assert "ValidationError" in result.stderr
