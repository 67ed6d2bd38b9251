"""Operator command line: predict, explain, evaluate, split, augment, QA, serve.

Exit codes: 0 on success, 1 on a domain failure (one-line message on
stderr), 2 on a usage error. With --json, stdout carries only JSON.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evaluation, imaging, modelqa, saliency as saliency_mod
from .datastore import DatasetManifest, SampleStore
from .errors import StratificationError, WssvWatchError
from .evaluation import FoldPlan, SplitAssignment
from .inference import predict as run_predict, load_model, read_bundle, preprocess_config_for
from .service import ServiceConfig, load_config


def friendly(fn):
    """Map domain errors to exit 1 with a single parsable stderr line."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except WssvWatchError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def emit(obj: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(json.dumps(obj, indent=2, sort_keys=True))
    else:
        click.echo(human)


def _parse_roi(raw: str | None):
    if raw is None:
        return None, "center_square"
    parts = raw.split(",")
    if len(parts) != 4:
        raise click.UsageError("--roi must be left,top,width,height")
    try:
        roi = tuple(int(p) for p in parts)
    except ValueError:
        raise click.UsageError("--roi parts must be integers")
    return roi, "explicit_roi"


def _load_input(bundle_dir, image_path, roi_raw):
    bundle = read_bundle(bundle_dir)
    handle = load_model(bundle)
    roi, crop_mode = _parse_roi(roi_raw)
    cfg = preprocess_config_for(handle.metadata, crop_mode=crop_mode, roi=roi)
    img = imaging.decode_image(Path(image_path).read_bytes())
    inp = imaging.preprocess(img, cfg, provenance=Path(image_path).name)
    return handle, img, cfg, inp


@click.group()
@click.version_option(package_name="wssvwatch")
def main():
    """Shrimp-pond disease screening toolkit."""


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--roi", default=None, help="left,top,width,height square crop")
@click.option("--json", "as_json", is_flag=True)
@friendly
def predict(bundle_dir, image_path, roi, as_json):
    """Score one image with a model bundle."""
    handle, _, _, inp = _load_input(bundle_dir, image_path, roi)
    pred = run_predict(handle, inp)
    emit(
        pred.to_json(),
        as_json,
        f"score      {pred.score:.6f}\n"
        f"decision   {pred.decision}\n"
        f"model      {pred.model_id}\n"
        f"latency_ms {pred.latency_ms:.3f}",
    )


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--map", "map_path", default=None, type=click.Path(dir_okay=False))
@click.option("--patch", "patch_side", default=16, show_default=True)
@click.option("--stride", default=8, show_default=True)
@click.option("--fill", default="mean_color", type=click.Choice(["mean_color", "gray_128"]))
@click.option("--roi", default=None, help="left,top,width,height square crop")
@click.option("--json", "as_json", is_flag=True)
@friendly
def saliency(bundle_dir, image_path, out_path, map_path, patch_side, stride, fill, roi, as_json):
    """Render an occlusion saliency overlay for one image."""
    handle, img, cfg, inp = _load_input(bundle_dir, image_path, roi)
    sal_cfg = saliency_mod.OcclusionConfig(patch_side=patch_side, stride=stride, fill=fill)
    sal_map = saliency_mod.occlusion_saliency(handle, inp, sal_cfg)
    overlay = saliency_mod.render_overlay(sal_map, imaging.crop_resize(img, cfg))
    Path(out_path).write_bytes(imaging.encode_png(overlay))
    if map_path:
        sal_map.save(map_path)
    passes = len(saliency_mod.patch_positions(inp.side, sal_cfg)) + 1
    emit(
        {
            "baseline_score": sal_map.baseline_score,
            "side": sal_map.side,
            "forward_passes": passes,
            "overlay": str(out_path),
        },
        as_json,
        f"baseline score {sal_map.baseline_score:.6f} over {passes} forward passes\n"
        f"overlay written to {out_path}",
    )


@main.command()
@click.option("--scores", "score_files", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="one CSV (sample_id,truth,score) per fold")
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@friendly
def evaluate(score_files, threshold, as_json):
    """Compute F1, AUC-ROC, and FNR per fold and aggregate."""
    by_fold = {
        i: evaluation.load_labeled_csv(path) for i, path in enumerate(score_files)
    }
    summary = evaluation.evaluate_run(by_fold, k=len(score_files), threshold=threshold)
    emit(summary.to_json(), as_json, summary.to_text())


def _labels_from_manifest(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        manifest = DatasetManifest.from_json(json.load(fh))
    labels = {
        r["id"]: r["label"]
        for r in manifest.samples
        if r["label"] in ("healthy", "wssv") and not r.get("augmentation_of")
    }
    if not labels:
        raise StratificationError("manifest holds no labeled, unaugmented samples")
    return labels


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@friendly
def kfold(manifest_path, k, seed, out_path, as_json):
    """Write a stratified k-fold plan for a dataset manifest."""
    plan = evaluation.stratified_kfold(_labels_from_manifest(manifest_path), k=k, seed=seed)
    plan.save(out_path)
    fold_sizes = [len(plan.fold_ids(i)) for i in range(k)]
    emit(
        {"k": k, "seed": seed, "fold_sizes": fold_sizes, "plan": str(out_path)},
        as_json,
        f"{len(plan.assignments)} samples over {k} folds {fold_sizes}; plan written to {out_path}",
    )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--fraction", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@friendly
def holdout(manifest_path, fraction, seed, out_path, as_json):
    """Write a stratified train/test split for a dataset manifest."""
    split = evaluation.stratified_holdout(
        _labels_from_manifest(manifest_path), test_fraction=fraction, seed=seed
    )
    split.save(out_path)
    emit(
        {
            "train": len(split.train_ids),
            "test": len(split.test_ids),
            "fraction": fraction,
            "seed": seed,
            "plan": str(out_path),
        },
        as_json,
        f"train {len(split.train_ids)} / test {len(split.test_ids)}; plan written to {out_path}",
    )


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--spec", "spec_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="apply one saved spec instead of sampling")
@click.option("--json", "as_json", is_flag=True)
@friendly
def augment(image_path, out_dir, count, seed, spec_path, as_json):
    """Write augmented copies of an image (geometry, brightness, blur only)."""
    img = imaging.decode_image(Path(image_path).read_bytes())
    if spec_path:
        specs = [imaging.load_spec(spec_path)]
    else:
        specs = imaging.random_specs(count, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, spec in enumerate(specs):
        result = imaging.augment(img, spec, seed=seed)
        path = out / f"aug_{i:03d}.png"
        path.write_bytes(imaging.encode_png(result))
        written.append({"path": str(path), "spec": spec.to_json()})
    with open(out / "specs.json", "w", encoding="utf-8") as fh:
        json.dump([w["spec"] for w in written], fh, indent=2)
        fh.write("\n")
    emit(
        {"outputs": written, "seed": seed},
        as_json,
        "\n".join(w["path"] for w in written),
    )


@main.command()
@click.option("--reference", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--candidate", "cand_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--max-tol", default=2e-3, show_default=True)
@click.option("--mean-tol", default=1e-4, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@friendly
def parity(ctx, ref_path, cand_path, max_tol, mean_tol, as_json):
    """Gate a converted model's scores against its reference scores."""
    ref = modelqa.load_scores_csv(ref_path)
    cand = modelqa.load_scores_csv(cand_path)
    ref_vals, cand_vals = modelqa.align_scores(ref, cand)
    stats = modelqa.compare_outputs(ref_vals, cand_vals)
    verdict = modelqa.gate_parity(
        stats, modelqa.ParityGate(max_tolerance=max_tol, mean_tolerance=mean_tol)
    )
    human = (
        f"n    {stats.count}\n"
        f"mean {stats.mean:.6g}\nstd  {stats.stddev:.6g}\n"
        f"min  {stats.min:.6g}\nmax  {stats.max:.6g}\n"
        f"gate {'PASS' if verdict.passed else 'FAIL'}"
    )
    for reason in verdict.reasons:
        human += f"\n  {reason}"
    emit(verdict.to_json(), as_json, human)
    if not verdict.passed:
        ctx.exit(1)


@main.command()
@click.option("--bundle", "bundle_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--runs", default=5, show_default=True)
@click.option("--warmup", default=2, show_default=True)
@click.option("--device-label", default="cpu", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@friendly
def bench(bundle_dir, image_path, runs, warmup, device_label, as_json):
    """Measure forward-pass latency for a bundle on this machine."""
    handle, _, _, inp = _load_input(bundle_dir, image_path, None)
    stats = modelqa.benchmark_latency(
        handle, inp, runs=runs, warmup_runs=warmup, device_label=device_label
    )
    per_run = "  ".join(f"{v:.2f}" for v in stats.per_run_ms)
    emit(
        stats.to_json(),
        as_json,
        f"device {stats.device_label}\nruns   [{per_run}] ms\nmean   {stats.mean_ms:.2f} ms",
    )


@main.group()
def dataset():
    """Manage the local image dataset store."""


@dataset.command("add")
@click.option("--root", "root_dir", required=True, type=click.Path(file_okay=False))
@click.option("--label", default="unlabeled", show_default=True)
@click.option("--source", default="import", show_default=True)
@click.option("--device-label", default=None)
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_add(root_dir, label, source, device_label, images, as_json):
    """Ingest image files; duplicate bytes resolve to the existing record."""
    store = SampleStore(root_dir)
    records = [
        store.add_sample(
            Path(p).read_bytes(), label=label, source=source, device_label=device_label
        ).to_record()
        for p in images
    ]
    emit(
        {"added": records},
        as_json,
        "\n".join(f"{r['id'][:12]}  {r['label']}" for r in records),
    )


@dataset.command("label")
@click.option("--root", "root_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--editor", default="cli", show_default=True)
@click.argument("sample_id")
@click.argument("label")
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_label(root_dir, editor, sample_id, label, as_json):
    """Relabel one sample (audited)."""
    store = SampleStore(root_dir)
    record = store.set_label(sample_id, label, editor=editor).to_record()
    emit(record, as_json, f"{record['id'][:12]}  {record['label']}")


@dataset.command("assign-splits")
@click.option("--root", "root_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_assign_splits(root_dir, plan_path, as_json):
    """Apply a holdout or fold plan file to the store."""
    with open(plan_path, encoding="utf-8") as fh:
        obj = json.load(fh)
    plan = FoldPlan.from_json(obj) if "assignments" in obj else SplitAssignment.from_json(obj)
    store = SampleStore(root_dir)
    changed = store.assign_splits(plan)
    emit({"changed": changed}, as_json, f"{changed} samples updated")


@dataset.command("list")
@click.option("--root", "root_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--label", default=None)
@click.option("--split", default=None)
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_list(root_dir, label, split, as_json):
    """List sample records, optionally filtered."""
    store = SampleStore(root_dir)
    records = [s.to_record() for s in store.list_samples(label=label, split=split)]
    emit(
        {"samples": records},
        as_json,
        "\n".join(f"{r['id'][:12]}  {r['label']:<9} {r['split']:<10} {r['source']}" for r in records)
        or "(empty)",
    )


@dataset.command("export")
@click.option("--root", "root_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--label", default=None)
@click.option("--split", default=None)
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_export(root_dir, out_path, label, split, as_json):
    """Export manifest + blobs: to one .tar, or as a pair into a directory."""
    store = SampleStore(root_dir)
    out = Path(out_path)
    if out.suffix == ".tar":
        out.write_bytes(store.export_combined(label=label, split=split))
        written = [str(out)]
    else:
        out.mkdir(parents=True, exist_ok=True)
        manifest_bytes, blobs_tar = store.export_archive(label=label, split=split)
        (out / "manifest.json").write_bytes(manifest_bytes)
        (out / "blobs.tar").write_bytes(blobs_tar)
        written = [str(out / "manifest.json"), str(out / "blobs.tar")]
    emit({"written": written}, as_json, "\n".join(written))


@dataset.command("import")
@click.option("--root", "root_dir", required=True, type=click.Path(file_okay=False))
@click.argument("archive", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--blobs", "blobs_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@friendly
def dataset_import(root_dir, archive, manifest_path, blobs_path, as_json):
    """Import a combined .tar, or a manifest/blobs pair."""
    store = SampleStore(root_dir)
    if archive:
        added = store.import_combined(Path(archive).read_bytes())
    elif manifest_path and blobs_path:
        added = store.import_archive(
            Path(manifest_path).read_bytes(), Path(blobs_path).read_bytes()
        )
    else:
        raise click.UsageError("give either an archive or both --manifest and --blobs")
    emit({"added": added}, as_json, f"{added} samples imported")


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
@friendly
def serve(config_path, host, port, data_dir):
    """Run the HTTP service."""
    from . import service as service_mod

    config = load_config(config_path)
    if host or port or data_dir:
        config = ServiceConfig(
            host=host or config.host,
            port=port or config.port,
            data_dir=data_dir or config.data_dir,
            default_threshold=config.default_threshold,
        )
    click.echo(f"listening on {config.host}:{config.port}, data in {config.data_dir}", err=True)
    service_mod.serve(config)


if __name__ == "__main__":
    sys.exit(main())
