"""Acceptance suite: one test per criterion, each printing a PASS line.

The synthetic method comparison (criterion 9) runs the full pipeline once
per session from configs/acceptance.json; the baseline-validity run
(criterion 10) reuses that config with warp and registration error zeroed.
Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines as they pass.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from effmap import pipeline
from effmap.atlasmap import IdentityTransform, build_efficacy_map, project_map, score_coordinate
from effmap.cli import main as cli_main
from effmap.config import ExperimentConfig, load_config
from effmap.metrics import auc, mcnemar, roc_curve, trapezoid_auc, wilcoxon_mann_whitney
from effmap.patchset import plan_folds
from effmap.phantom import StimRecord
from effmap.rng import make_rng
from effmap.stimkernel import radius_for_current, rasterize_sphere
from effmap.tinynn import ModelConfig, TrainConfig, build_model, grad_check, train
from effmap.volgrid import Volume

CONFIG_PATH = Path(__file__).resolve().parent.parent / "configs" / "acceptance.json"


def _criterion(num: int, passed: bool, detail: str) -> None:
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {detail}")
    assert passed, f"criterion {num}: {detail}"


@pytest.fixture(scope="session")
def comparison_run(tmp_path_factory):
    """Full pipeline at the pinned acceptance config (criterion 9)."""
    out = tmp_path_factory.mktemp("acceptance")
    cfg = load_config(CONFIG_PATH)
    pipeline.run_phantom(cfg, out)
    pipeline.run_patches(cfg, out)
    pipeline.run_atlas(cfg, out)
    pipeline.run_train(cfg, out)
    pipeline.run_predict(cfg, out)
    report = pipeline.run_report(cfg, out)
    return cfg, out, report


def test_criterion_1_radius_table():
    knots = [(1, 1.80), (2, 2.42), (3, 2.94), (4, 3.33), (5, 3.72), (6, 4.05), (7, 4.35)]
    ok = all(abs(radius_for_current(c) - r) <= 1e-12 for c, r in knots)
    ok &= abs(radius_for_current(0.5) - 1.00) <= 1e-12
    ok &= abs(radius_for_current(4.5) - 3.525) <= 1e-12
    _criterion(1, ok, "Table 1 knots exact, 0.5 mA -> 1.00 mm, 4.5 mA -> 3.525 mm")


def test_criterion_2_sphere_kernel():
    grid = Volume(np.zeros((1, 48, 48, 48), np.float32))
    rng = make_rng(2024)
    mass_ok = True
    for _ in range(100):
        center = rng.uniform(8, 40, size=3)
        radius = rng.uniform(0.4, 4.35)
        pdf = rasterize_sphere(grid, center, radius)
        mass_ok &= abs(pdf.n * pdf.mass_per_voxel - 1.0) <= 1e-9
    count_ok = True
    for radius in np.linspace(3.0, 4.35, 12):
        pdf = rasterize_sphere(grid, [24.0, 24.0, 24.0], float(radius))
        expected = 4.0 / 3.0 * np.pi * radius**3
        count_ok &= abs(pdf.n - expected) / expected <= 0.15
    _criterion(2, mass_ok and count_ok, "sphere mass = 1 +- 1e-9; count within 15% of (4/3)pi r^3")


def test_criterion_3_atlas_scoring_oracle():
    grid = Volume(np.zeros((1, 40, 40, 40), np.float32))
    rng = make_rng(3003)
    records = [
        StimRecord("p", float(rng.uniform(12, 28)), float(rng.uniform(12, 28)),
                   float(rng.uniform(12, 28)), float(rng.choice([1.0, 2.0, 3.0])),
                   80.0, False)
        for _ in range(12)
    ]
    emap = build_efficacy_map(records, {"p": IdentityTransform()}, grid)
    projected = project_map(emap, IdentityTransform(), grid)
    data = projected.data[0].astype(np.float64)
    zz, yy, xx = np.meshgrid(range(40), range(40), range(40), indexing="ij")
    worst = 0.0
    for _ in range(200):
        coord = rng.uniform(6, 34, size=3)
        current = float(rng.choice([1.0, 2.0, 3.0]))
        r = radius_for_current(current)
        mask = ((xx - coord[0]) ** 2 + (yy - coord[1]) ** 2 + (zz - coord[2]) ** 2) <= r**2
        expected = data[mask].sum()
        got = score_coordinate(projected, coord, current)
        worst = max(worst, abs(got - expected))
    _criterion(3, worst <= 1e-9, f"score vs brute-force mask-sum, max |diff| {worst:.2e}")


def test_criterion_4_auc_oracle():
    rng = make_rng(4004)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 201))
        scores = np.round(rng.normal(size=n), 1)  # injected ties
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        pairwise = auc(scores, labels)
        trap = trapezoid_auc(roc_curve(scores, labels))
        worst = max(worst, abs(pairwise - trap))
    _criterion(4, worst <= 1e-12, f"pairwise vs trapezoid AUC, max |diff| {worst:.2e}")


def test_criterion_5_mcnemar():
    a = [True] * 15 + [False] * 5
    b = [False] * 15 + [True] * 5
    bb, cc, chi2, p = mcnemar(a, b)
    ok = (bb, cc) == (15, 5) and abs(chi2 - 4.05) <= 1e-12 and abs(p - 0.0441) <= 0.0005
    sym = mcnemar([True, False], [False, True])
    ok &= sym[3] == 1.0
    _criterion(5, ok, f"b=15,c=5 -> chi2 {chi2:.4f}, p {p:.4f}; b=c -> p=1")


def test_criterion_6_wmw_exact():
    u, p = wilcoxon_mann_whitney([1, 2, 3], [4, 5, 6])
    _criterion(6, u == 0.0 and abs(p - 0.1) <= 1e-15, f"U={u}, exact two-sided p={p}")


def test_criterion_7_gradient_check():
    model = build_model(ModelConfig(widths=(2, 2, 2, 2, 2)), seed=3)
    x = make_rng(1).normal(size=(2, 2, 11, 11, 11)).astype(np.float32)
    y = np.array([1.0, 0.0])
    err = grad_check(model, x, y, epsilon=1e-3, n_samples=200, seed=5)
    _criterion(7, err <= 1e-2, f"max relative gradient error {err:.2e} (float32, eps 1e-3)")


def test_criterion_8_overfit_sanity():
    rng = make_rng(88)
    x = rng.normal(size=(16, 2, 11, 11, 11)).astype(np.float32)
    y = (np.arange(16) % 2).astype(np.float64)
    model = build_model(ModelConfig(widths=(2, 2, 2, 2, 2)), seed=2)
    cfg = TrainConfig(learning_rate=1e-3, batch_size=16, max_epochs=200,
                      early_stop_window=10**9, seed=3)
    train(model, x, y, x, y, cfg)
    acc = float(np.mean((model.predict_proba(x) >= 0.5) == (y == 1)))
    # the returned best checkpoint may predate full memorization; the
    # criterion asks about reaching accuracy 1.0 during training
    _criterion(8, acc == 1.0, f"train accuracy {acc} after <= 200 epochs at lr 1e-3")


def test_criterion_9_synthetic_method_comparison(comparison_run):
    _, _, report = comparison_run
    cnn = report["methods"]["cnn"]["auc"]
    base = report["methods"]["baseline"]["auc"]
    bayes = report["methods"]["bayes"]["auc"]
    ok_a = cnn >= base + 0.02
    ok_b = cnn <= bayes + 0.02
    ok_c = base > 0.55
    _criterion(
        9,
        ok_a and ok_b and ok_c,
        f"CNN {cnn:.4f} vs baseline {base:.4f} vs Bayes {bayes:.4f} "
        f"(a: +0.02 margin {ok_a}, b: <= Bayes+0.02 {ok_b}, c: baseline > 0.55 {ok_c})",
    )


def test_criterion_10_baseline_validity(tmp_path):
    cfg = load_config(CONFIG_PATH)
    exact = ExperimentConfig.from_dict(
        dict(
            cfg.to_dict(),
            phantom=dict(cfg.phantom.to_dict(), warp_amplitude_mm=0.0),
            baseline=dict(cfg.baseline.__dict__, reg_error_mm=0.0),
        )
    )
    out = tmp_path / "exact"
    pipeline.run_phantom(exact, out)
    pipeline.run_patches(exact, out)
    pipeline.run_atlas(exact, out)
    rows = pipeline._pooled_rows(out, "baseline")
    bayes = pipeline.bayes_scores(out)
    a_base = auc([r.score for r in rows], [r.label for r in rows])
    a_bayes = auc([r.score for r in bayes], [r.label for r in bayes])
    _criterion(
        10,
        abs(a_base - a_bayes) <= 0.05,
        f"exact-registration baseline {a_base:.4f} within 0.05 of Bayes {a_bayes:.4f}",
    )


def test_criterion_11_determinism(tmp_path):
    cfg_dict = {
        "seed": 77,
        "phantom": {"dims": [36, 36, 36], "subjects": 4, "tracks_per_subject": 2,
                    "samples_per_track": 3, "seed": 77, "warp_amplitude_mm": 1.0},
        "folds": {"k": 2, "val_frac": 0.34},
        "model": {"widths": [2, 2, 2, 2, 2], "first_kernel": 3},
        "train": {"max_epochs": 2, "batch_size": 4, "learning_rate": 1e-3},
        "patch_size": 9,
    }
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(cfg_dict))
    digests = []
    for run in ("r1", "r2"):
        out = tmp_path / run
        for cmd in (
            ["phantom", "--config", str(cfg_path), "--out", str(out)],
            ["patches", "--config", str(cfg_path), "--out", str(out)],
            ["atlas", "--config", str(cfg_path), "--out", str(out)],
            ["train", "--config", str(cfg_path), "--out", str(out), "--threads", "1"],
            ["predict", "--config", str(cfg_path), "--out", str(out)],
            ["report", "--config", str(cfg_path), "--out", str(out)],
        ):
            assert cli_main(cmd) == 0, f"command failed: {cmd}"
        digests.append(
            {
                "cohort": json.loads((out / "cohort" / "manifest.json").read_text())["content_hash"],
                "checkpoint": pipeline.file_sha256(out / "cnn" / "fold_0" / "checkpoint.tnn"),
                "report": pipeline.file_sha256(out / "report" / "report.json"),
                "roc_svg": pipeline.file_sha256(out / "report" / "roc.svg"),
            }
        )
    _criterion(
        11,
        digests[0] == digests[1],
        f"phantom/train/report re-runs hash identically: {digests[0] == digests[1]}",
    )


def test_criterion_12_fold_plan_law():
    ids = [f"p{i:03d}" for i in range(187)]
    plan = plan_folds(ids, k=5, val_frac=0.10, seed=42)
    sizes = sorted((len(f.test) for f in plan.folds), reverse=True)
    ok = sizes == [38, 38, 37, 37, 37]
    tested = [p for f in plan.folds for p in f.test]
    ok &= sorted(tested) == sorted(ids)
    for f in plan.folds:
        n_rest = 187 - len(f.test)
        ok &= len(f.val) == int(np.ceil(0.10 * n_rest))
        ok &= not (set(f.train) & set(f.val))
    _criterion(12, ok, f"187 patients, k=5 -> test folds {sizes}, val = ceil(10% of rest)")
