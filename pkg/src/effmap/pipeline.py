"""Experiment orchestration: the stages behind the CLI subcommands.

A run directory is laid out as

    cohort/.../manifest.json     `phantom`
    folds.json, dataset/         `patches`
    baseline/fold_k/scores.csv   `atlas`
    cnn/fold_k/checkpoint.tnn    `train`
    cnn/fold_k/scores.csv        `predict`
    maps/                        `map`
    eval/, compare.json          `eval`, `compare`
    report/                      `report`

Scores for the baseline, the CNN, and the ground-truth Bayes reference
all live in the same CSV schema keyed by (patient, coordinate, current),
so the comparison stages can pair rows exactly.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import atlasmap, metrics, patchset, phantom, report as report_mod
from .atlasmap import ScoreRow, read_scores_csv, write_scores_csv
from .config import ExperimentConfig
from .errors import ConfigError, DataError, MissingFileError, PairingError
from .patchset import ManifestRow
from .rng import (
    TAG_FOLDS,
    TAG_MODEL_INIT,
    TAG_REGISTRATION,
    TAG_TRAIN,
    derive_seed,
)
from .tinynn import (
    TrainConfig,
    build_model,
    load_checkpoint,
    model_from_checkpoint,
    predict_patches,
    save_checkpoint,
    train,
)
from .volgrid import Volume, read_mvol, voxel_to_world, write_mvol, z_normalize


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------


def run_phantom(cfg: ExperimentConfig, out_dir) -> dict:
    cohort = phantom.generate_cohort(cfg.phantom)
    return phantom.export_cohort(cohort, Path(out_dir) / "cohort")


# ---------------------------------------------------------------------------
# patches (label, dedup, folds, extraction)
# ---------------------------------------------------------------------------


def _prepared_records(cohort: phantom.Cohort):
    """Label, drop pass-effect exclusions, dedup; plus the raw counts."""
    labeled_all = []
    for s in cohort.subjects:
        labeled_all.extend(patchset.label_records(s.records))
    included = [lr for lr in labeled_all if lr.label != patchset.EXCLUDED]
    deduped = patchset.dedup_lowest_current(included)
    counts = {
        "total_records": len(labeled_all),
        "excluded": len(labeled_all) - len(included),
        "positive_pre_dedup": sum(1 for lr in included if lr.label == patchset.POSITIVE),
        "null_pre_dedup": sum(1 for lr in included if lr.label == patchset.NULL),
        "kept_post_dedup": len(deduped),
        "positive_post_dedup": sum(1 for lr in deduped if lr.label == patchset.POSITIVE),
        "null_post_dedup": sum(1 for lr in deduped if lr.label == patchset.NULL),
    }
    return deduped, counts


def run_patches(cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    cohort = phantom.import_cohort(out / "cohort")
    deduped, counts = _prepared_records(cohort)

    plan = patchset.plan_folds(
        [s.id for s in cohort.subjects],
        k=cfg.folds.k,
        val_frac=cfg.folds.val_frac,
        seed=derive_seed(cfg.seed, TAG_FOLDS),
    )
    with open(out / "folds.json", "w", encoding="utf-8") as f:
        json.dump(plan.to_dict(), f, sort_keys=True, indent=1)
        f.write("\n")

    ds_dir = out / "dataset"
    patches_dir = ds_dir / "patches"
    patches_dir.mkdir(parents=True, exist_ok=True)
    by_subject = {s.id: s for s in cohort.subjects}
    rows = []
    ordered = sorted(
        deduped,
        key=lambda lr: (
            lr.record.patient_id,
            lr.record.x_mm,
            lr.record.y_mm,
            lr.record.z_mm,
            lr.record.current_ma,
        ),
    )
    normed = {}
    for i, lr in enumerate(ordered):
        subj = by_subject[lr.record.patient_id]
        if subj.id not in normed:
            normed[subj.id] = z_normalize(subj.intensity)
        p = patchset.extract_patch(
            normed[subj.id],
            subj.labels,
            lr.record.coord(),
            cfg.patch_size,
            label=lr.binary,
            patient_id=subj.id,
            current_ma=lr.record.current_ma,
            encoding=cfg.patch_encoding,
        )
        fname = f"patches/p_{i:05d}.mvol"
        write_mvol(Volume(p.data, subj.intensity.voxel_size), ds_dir / fname)
        rows.append(
            ManifestRow(
                patient_id=lr.record.patient_id,
                x_mm=lr.record.x_mm,
                y_mm=lr.record.y_mm,
                z_mm=lr.record.z_mm,
                current_ma=lr.record.current_ma,
                label=lr.binary,
                patch_file=fname,
            )
        )
    patchset.write_manifest_csv(rows, ds_dir / "manifest.csv")
    meta = dict(counts, patch_size=cfg.patch_size, n_patches=len(rows))
    with open(ds_dir / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
        f.write("\n")
    return meta


def load_fold_plan(out_dir) -> patchset.FoldPlan:
    path = Path(out_dir) / "folds.json"
    if not path.exists():
        raise MissingFileError(f"missing fold plan {path}; run `patches` first")
    with open(path, encoding="utf-8") as f:
        return patchset.FoldPlan.from_dict(json.load(f))


def _load_dataset(out_dir):
    rows = patchset.read_manifest_csv(Path(out_dir) / "dataset" / "manifest.csv")
    return rows


def _load_patch_stack(out_dir, rows: list[ManifestRow]) -> np.ndarray:
    ds_dir = Path(out_dir) / "dataset"
    stack = []
    for r in rows:
        vol = read_mvol(ds_dir / r.patch_file)
        stack.append(vol.data)
    return np.stack(stack) if stack else np.zeros((0,), dtype=np.float32)


# ---------------------------------------------------------------------------
# baseline lane
# ---------------------------------------------------------------------------


def _registration_transforms(cfg: ExperimentConfig, cohort: phantom.Cohort):
    """Per-subject simulated registrations (subject -> atlas)."""
    grid = cohort.template.labels
    transforms = {}
    for i, s in enumerate(cohort.subjects):
        true_t = atlasmap.transform_from_true_warp(s.true_warp)
        transforms[s.id] = atlasmap.simulated_registration(
            true_t,
            grid,
            cfg.baseline.reg_error_mm,
            cfg.baseline.reg_error_smoothness_mm,
            derive_seed(cfg.seed, TAG_REGISTRATION, i),
        )
    return transforms


def _rows_to_records(rows: list[ManifestRow]) -> list[phantom.StimRecord]:
    return [
        phantom.StimRecord(
            patient_id=r.patient_id,
            x_mm=r.x_mm,
            y_mm=r.y_mm,
            z_mm=r.z_mm,
            current_ma=r.current_ma,
            improvement_pct=100.0 if r.label else 0.0,
            pass_effect=False,
        )
        for r in rows
    ]


def run_atlas(cfg: ExperimentConfig, out_dir, fold: int | None = None) -> list[Path]:
    out = Path(out_dir)
    cohort = phantom.import_cohort(out / "cohort")
    plan = load_fold_plan(out)
    rows = _load_dataset(out)
    transforms = _registration_transforms(cfg, cohort)
    atlas_grid = cohort.template.labels
    by_subject = {s.id: s for s in cohort.subjects}

    written = []
    folds = range(plan.k) if fold is None else [fold]
    for f in folds:
        fd = plan.folds[f]
        train_patients = set(fd.train) | set(fd.val)
        pos_rows = [r for r in rows if r.patient_id in train_patients and r.label == 1]
        emap = atlasmap.build_efficacy_map(
            _rows_to_records(pos_rows), transforms, atlas_grid
        )
        fold_dir = out / "baseline" / f"fold_{f}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        write_mvol(emap.volume, fold_dir / "map.mvol")
        score_rows = []
        for pid in fd.test:
            subj = by_subject[pid]
            projected = atlasmap.project_map(emap, transforms[pid], subj.labels)
            for r in rows:
                if r.patient_id != pid:
                    continue
                score = atlasmap.score_coordinate(projected, r.coord(), r.current_ma)
                score_rows.append(
                    ScoreRow(r.patient_id, r.x_mm, r.y_mm, r.z_mm, r.current_ma, score, r.label)
                )
        write_scores_csv(score_rows, fold_dir / "scores.csv")
        written.append(fold_dir / "scores.csv")
    return written


# ---------------------------------------------------------------------------
# CNN lane
# ---------------------------------------------------------------------------


def _fold_train_arrays(out_dir, rows, fd: patchset.Fold):
    train_rows = [r for r in rows if r.patient_id in set(fd.train)]
    val_rows = [r for r in rows if r.patient_id in set(fd.val)]
    x_train = _load_patch_stack(out_dir, train_rows)
    y_train = np.array([r.label for r in train_rows], dtype=np.float64)
    x_val = _load_patch_stack(out_dir, val_rows)
    y_val = np.array([r.label for r in val_rows], dtype=np.float64)
    return x_train, y_train, x_val, y_val


def train_one_fold(cfg: ExperimentConfig, out_dir, f: int) -> Path:
    out = Path(out_dir)
    plan = load_fold_plan(out)
    rows = _load_dataset(out)
    fd = plan.folds[f]
    x_train, y_train, x_val, y_val = _fold_train_arrays(out, rows, fd)
    if len(x_train) == 0 or len(x_val) == 0:
        raise ConfigError(f"fold {f} has an empty train or validation set")
    model = build_model(cfg.model, seed=derive_seed(cfg.seed, TAG_MODEL_INIT, f))
    tc = TrainConfig.from_dict(
        dict(cfg.train.to_dict(), seed=derive_seed(cfg.seed, TAG_TRAIN, f))
    )
    ckpt, history = train(model, x_train, y_train, x_val, y_val, tc)
    fold_dir = out / "cnn" / f"fold_{f}"
    fold_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, fold_dir / "checkpoint.tnn")
    with open(fold_dir / "history.json", "w", encoding="utf-8") as f_:
        json.dump(history, f_, sort_keys=True, indent=1)
        f_.write("\n")
    return fold_dir / "checkpoint.tnn"


def _train_fold_entry(args):
    cfg_dict, out_dir, f = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return str(train_one_fold(cfg, out_dir, f))


def run_train(cfg: ExperimentConfig, out_dir, fold: int | None = None, jobs: int = 1) -> list[Path]:
    plan = load_fold_plan(out_dir)
    folds = list(range(plan.k)) if fold is None else [fold]
    if jobs > 1 and len(folds) > 1:
        args = [(cfg.to_dict(), str(out_dir), f) for f in folds]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return [Path(p) for p in pool.map(_train_fold_entry, args)]
    return [train_one_fold(cfg, out_dir, f) for f in folds]


def run_predict(cfg: ExperimentConfig, out_dir, fold: int | None = None) -> list[Path]:
    out = Path(out_dir)
    plan = load_fold_plan(out)
    rows = _load_dataset(out)
    written = []
    folds = range(plan.k) if fold is None else [fold]
    for f in folds:
        fd = plan.folds[f]
        ckpt_path = out / "cnn" / f"fold_{f}" / "checkpoint.tnn"
        if not ckpt_path.exists():
            raise MissingFileError(f"missing checkpoint {ckpt_path}; run `train` first")
        model = model_from_checkpoint(load_checkpoint(ckpt_path))
        test_rows = [r for r in rows if r.patient_id in set(fd.test)]
        x = _load_patch_stack(out, test_rows)
        probs = predict_patches(model, x) if len(test_rows) else np.zeros(0)
        score_rows = [
            ScoreRow(r.patient_id, r.x_mm, r.y_mm, r.z_mm, r.current_ma, float(p), r.label)
            for r, p in zip(test_rows, probs)
        ]
        path = out / "cnn" / f"fold_{f}" / "scores.csv"
        write_scores_csv(score_rows, path)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# ground-truth (Bayes) reference scores
# ---------------------------------------------------------------------------


def bayes_scores(out_dir) -> list[ScoreRow]:
    """Score every dataset row by the phantom's true response probability."""
    out = Path(out_dir)
    manifest = phantom.read_manifest(out / "cohort")
    eff = {
        e["id"]: phantom.EfficacyParams(
            tuple(e["efficacy"]["bump_center_mm"]),
            e["efficacy"]["sigma_mm"],
            e["efficacy"]["p_max"],
            e["efficacy"]["p_floor"],
        )
        for e in manifest["subjects"]
    }
    rows = _load_dataset(out)
    return [
        ScoreRow(
            r.patient_id,
            r.x_mm,
            r.y_mm,
            r.z_mm,
            r.current_ma,
            float(eff[r.patient_id].probability(r.coord())),
            r.label,
        )
        for r in rows
    ]


# ---------------------------------------------------------------------------
# sliding-window efficacy map
# ---------------------------------------------------------------------------


def sliding_efficacy_map(
    model,
    intensity_norm: Volume,
    labels: Volume,
    stride: int = 1,
    roi_mask: np.ndarray | None = None,
    patch_size: int = 27,
    chunk: int = 64,
    encoding: str = "scaled",
) -> Volume:
    """Model probability at every ROI voxel on the stride lattice;
    off-lattice ROI voxels take the nearest lattice value, non-ROI voxels
    are 0.  Default ROI is every non-background voxel."""
    from .errors import ShapeError
    from .patchset import extract_patch

    if stride < 1:
        raise ConfigError("stride must be >= 1")
    nx, ny, nz = labels.dims
    if roi_mask is None:
        roi_mask = labels.data[0] > 0
    if roi_mask.shape != (nz, ny, nx):
        raise ShapeError(f"ROI shape {roi_mask.shape} != volume {(nz, ny, nx)}")

    zz, yy, xx = np.nonzero(roi_mask)
    out = np.zeros((nz, ny, nx), dtype=np.float32)
    if len(zz) == 0:
        return Volume(out, labels.voxel_size, np.array(labels.affine))

    def to_lattice(idx, n):
        lat = np.rint(idx / stride).astype(np.int64) * stride
        return np.clip(lat, 0, ((n - 1) // stride) * stride)

    lx = to_lattice(xx, nx)
    ly = to_lattice(yy, ny)
    lz = to_lattice(zz, nz)
    lattice = np.stack([lx, ly, lz], axis=1)
    uniq, inverse = np.unique(lattice, axis=0, return_inverse=True)

    values = np.zeros(len(uniq), dtype=np.float64)
    batch = []
    batch_ids = []
    for i, (vx, vy, vz) in enumerate(uniq):
        center = voxel_to_world(labels, np.array([vx, vy, vz], dtype=np.float64))
        p = extract_patch(intensity_norm, labels, center, patch_size, encoding=encoding)
        batch.append(p.data)
        batch_ids.append(i)
        if len(batch) == chunk:
            values[batch_ids] = model.predict_proba(np.stack(batch), chunk=chunk)
            batch, batch_ids = [], []
    if batch:
        values[batch_ids] = model.predict_proba(np.stack(batch), chunk=chunk)

    out[zz, yy, xx] = values[inverse].astype(np.float32)
    return Volume(out, labels.voxel_size, np.array(labels.affine))


def run_map(
    cfg: ExperimentConfig,
    out_dir,
    subject_id: str | None = None,
    fold: int = 0,
    stride: int | None = None,
) -> Path:
    out = Path(out_dir)
    cohort = phantom.import_cohort(out / "cohort")
    plan = load_fold_plan(out)
    if subject_id is None:
        subject_id = plan.folds[fold].test[0]
    subj = next((s for s in cohort.subjects if s.id == subject_id), None)
    if subj is None:
        raise DataError(f"unknown subject {subject_id}")
    ckpt_path = out / "cnn" / f"fold_{fold}" / "checkpoint.tnn"
    if not ckpt_path.exists():
        raise MissingFileError(f"missing checkpoint {ckpt_path}; run `train` first")
    model = model_from_checkpoint(load_checkpoint(ckpt_path))
    vol = sliding_efficacy_map(
        model,
        z_normalize(subj.intensity),
        subj.labels,
        stride=stride if stride is not None else cfg.map_stride,
        patch_size=cfg.patch_size,
        encoding=cfg.patch_encoding,
    )
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    path = maps_dir / f"{subject_id}_fold{fold}.mvol"
    write_mvol(vol, path)
    report_mod.render_map_png(
        vol, subj.intensity, maps_dir / f"{subject_id}_fold{fold}.png"
    )
    return path


# ---------------------------------------------------------------------------
# evaluation / comparison / report
# ---------------------------------------------------------------------------


def _pooled_rows(out_dir, method: str) -> list[ScoreRow]:
    out = Path(out_dir)
    plan = load_fold_plan(out)
    rows = []
    for f in range(plan.k):
        path = out / method / f"fold_{f}" / "scores.csv"
        if not path.exists():
            raise MissingFileError(f"missing scores {path}")
        rows.extend(read_scores_csv(path))
    return sorted(rows, key=lambda r: r.key())


def evaluate_rows(rows: list[ScoreRow]) -> dict:
    scores = np.array([r.score for r in rows])
    labels = np.array([r.label for r in rows])
    curve = metrics.roc_curve(scores, labels)
    thr, sens, spec = metrics.operating_point(curve)
    return {
        "n": len(rows),
        "n_pos": int(labels.sum()),
        "auc": metrics.auc(scores, labels),
        "operating_point": {
            "threshold": thr,
            "sensitivity": sens,
            "specificity": spec,
        },
    }


def run_eval(scores_csv, out_json=None) -> dict:
    rows = read_scores_csv(scores_csv)
    result = evaluate_rows(rows)
    if out_json is not None:
        Path(out_json).parent.mkdir(parents=True, exist_ok=True)
        with open(out_json, "w", encoding="utf-8") as f:
            json.dump(result, f, sort_keys=True, indent=1)
            f.write("\n")
    return result


def compare_methods(rows_a: list[ScoreRow], rows_b: list[ScoreRow]) -> dict:
    """McNemar on paired correctness, each method at its own pooled
    operating point."""
    if len(rows_a) != len(rows_b):
        raise PairingError(f"{len(rows_a)} vs {len(rows_b)} scored coordinates")
    for ra, rb in zip(rows_a, rows_b):
        if ra.key() != rb.key() or ra.label != rb.label:
            raise PairingError(f"row mismatch at {ra.key()} vs {rb.key()}")
    labels = np.array([r.label for r in rows_a])
    sa = np.array([r.score for r in rows_a])
    sb = np.array([r.score for r in rows_b])
    thr_a = metrics.operating_point(metrics.roc_curve(sa, labels))[0]
    thr_b = metrics.operating_point(metrics.roc_curve(sb, labels))[0]
    correct_a = (sa >= thr_a) == (labels == 1)
    correct_b = (sb >= thr_b) == (labels == 1)
    b, c, chi2, p = metrics.mcnemar(correct_a, correct_b)
    return {
        "auc_a": metrics.auc(sa, labels),
        "auc_b": metrics.auc(sb, labels),
        "threshold_a": thr_a,
        "threshold_b": thr_b,
        "b": b,
        "c": c,
        "chi2": chi2,
        "p": p,
        "rule": "each method classifies at its own pooled Youden-J operating point",
    }


def run_compare(scores_a, scores_b, out_json=None) -> dict:
    rows_a = sorted(read_scores_csv(scores_a), key=lambda r: r.key())
    rows_b = sorted(read_scores_csv(scores_b), key=lambda r: r.key())
    result = compare_methods(rows_a, rows_b)
    if out_json is not None:
        Path(out_json).parent.mkdir(parents=True, exist_ok=True)
        with open(out_json, "w", encoding="utf-8") as f:
            json.dump(result, f, sort_keys=True, indent=1)
            f.write("\n")
    return result


def run_report(cfg: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    plan = load_fold_plan(out)
    pooled = {m: _pooled_rows(out, m) for m in ("baseline", "cnn")}
    bayes = sorted(bayes_scores(out), key=lambda r: r.key())
    # restrict the Bayes reference to the rows both methods scored
    keys = {r.key() for r in pooled["baseline"]}
    bayes = [r for r in bayes if r.key() in keys]

    methods = {}
    curves = {}
    for method, rows in list(pooled.items()) + [("bayes", bayes)]:
        scores = np.array([r.score for r in rows])
        labels = np.array([r.label for r in rows])
        curves[method] = metrics.roc_curve(scores, labels)
        entry = evaluate_rows(rows)
        per_fold = []
        if method != "bayes":
            for f in range(plan.k):
                test = set(plan.folds[f].test)
                fr = [r for r in rows if r.patient_id in test]
                per_fold.append(
                    metrics.auc([r.score for r in fr], [r.label for r in fr])
                )
            entry["per_fold_auc"] = per_fold
        methods[method] = entry

    comparison = compare_methods(pooled["cnn"], pooled["baseline"])

    rep_dir = out / "report"
    rep_dir.mkdir(parents=True, exist_ok=True)
    for method in ("baseline", "cnn", "bayes"):
        metrics.write_roc_csv(curves[method], rep_dir / f"roc_{method}.csv")
    report_mod.render_roc_svg(
        [curves["baseline"], curves["cnn"], curves["bayes"]],
        [
            f"baseline (AUC={methods['baseline']['auc']:.3f})",
            f"cnn (AUC={methods['cnn']['auc']:.3f})",
            f"bayes (AUC={methods['bayes']['auc']:.3f})",
        ],
        rep_dir / "roc.svg",
    )
    report_mod.render_roc_png(
        {m: curves[m] for m in ("baseline", "cnn", "bayes")},
        {m: methods[m]["auc"] for m in ("baseline", "cnn", "bayes")},
        rep_dir / "roc.png",
    )

    cohort_manifest = phantom.read_manifest(out / "cohort")
    report = {
        "methods": methods,
        "mcnemar_cnn_vs_baseline": comparison,
        "config": cfg.to_dict(),
        "hashes": {
            "cohort": cohort_manifest["content_hash"],
            **{
                f"{m}_fold_{f}": file_sha256(out / m / f"fold_{f}" / "scores.csv")
                for m in ("baseline", "cnn")
                for f in range(plan.k)
            },
        },
    }
    with open(rep_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report, f, sort_keys=True, indent=1)
        f.write("\n")
    return report
