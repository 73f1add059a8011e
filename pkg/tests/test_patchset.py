import numpy as np
import pytest

from effmap.errors import ConfigError, DataError
from effmap.patchset import (
    EXCLUDED,
    NULL,
    POSITIVE,
    FoldPlan,
    ManifestRow,
    dedup_lowest_current,
    extract_patch,
    label_records,
    plan_folds,
    read_manifest_csv,
    write_manifest_csv,
)
from effmap.phantom import StimRecord
from effmap.rng import make_rng
from effmap.volgrid import Volume


def rec(pid="p0", x=0.0, y=0.0, z=0.0, current=2.0, improvement=70.0, pe=False):
    return StimRecord(pid, x, y, z, current, improvement, pe)


class TestLabeling:
    def test_positive(self):
        assert label_records([rec(improvement=80.0)])[0].label == POSITIVE

    def test_pass_effect_excluded_even_when_high(self):
        assert label_records([rec(improvement=80.0, pe=True)])[0].label == EXCLUDED

    def test_boundary_fifty_is_null(self):
        assert label_records([rec(improvement=50.0)])[0].label == NULL

    def test_out_of_range_rejected(self):
        with pytest.raises(DataError):
            label_records([rec(improvement=101.0)])

    def test_labeling_total(self):
        rng = make_rng(3)
        records = [
            rec(improvement=float(rng.uniform(0, 100)), pe=bool(rng.random() < 0.2))
            for _ in range(200)
        ]
        labeled = label_records(records)
        assert len(labeled) == 200
        assert all(lr.label in (POSITIVE, NULL, EXCLUDED) for lr in labeled)


class TestDedup:
    def test_lowest_current_among_max_improvement(self):
        group = label_records([rec(current=2.0, improvement=70.0), rec(current=3.0, improvement=70.0)])
        kept = dedup_lowest_current(group)
        assert len(kept) == 1
        assert kept[0].record.current_ma == 2.0

    def test_max_improvement_wins_over_current(self):
        group = label_records([rec(current=2.0, improvement=40.0), rec(current=3.0, improvement=60.0)])
        kept = dedup_lowest_current(group)
        assert kept[0].record.current_ma == 3.0
        assert kept[0].record.improvement_pct == 60.0

    def test_single_record_unchanged(self):
        one = label_records([rec()])
        assert dedup_lowest_current(one) == one

    def test_tie_breaks_by_input_order(self):
        a = rec(current=2.0, improvement=70.0, x=0.001)
        b = rec(current=2.0, improvement=70.0, x=0.002)
        kept = dedup_lowest_current(label_records([a, b]))
        assert kept[0].record is a

    def test_distant_sites_kept_separately(self):
        group = label_records([rec(x=0.0), rec(x=5.0)])
        assert len(dedup_lowest_current(group)) == 2

    def test_patients_never_grouped_together(self):
        group = label_records([rec(pid="a"), rec(pid="b")])
        assert len(dedup_lowest_current(group)) == 2

    def test_no_same_patient_pair_within_eps(self):
        rng = make_rng(5)
        records = [
            rec(x=float(rng.uniform(0, 3)), y=float(rng.uniform(0, 3)),
                z=float(rng.uniform(0, 3)), current=float(rng.choice([1, 2, 3])),
                improvement=float(rng.uniform(0, 100)))
            for _ in range(60)
        ]
        kept = dedup_lowest_current(label_records(records), eps_mm=0.5)
        coords = np.array([k.record.coord() for k in kept])
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                assert np.linalg.norm(coords[i] - coords[j]) > 0  # never identical
        assert len(kept) <= len(records)


class TestExtractPatch:
    def setup_method(self):
        rng = make_rng(7)
        self.intensity = Volume(rng.normal(size=(1, 20, 20, 20)).astype(np.float32))
        labels = rng.integers(0, 4, size=(1, 20, 20, 20)).astype(np.uint8)
        self.labels = Volume(labels)

    def test_center_value(self):
        p = extract_patch(self.intensity, self.labels, [10.0, 10.0, 10.0], 7)
        assert p.data[0, 3, 3, 3] == self.intensity.at(10, 10, 10)

    def test_zero_fill_near_face(self):
        p = extract_patch(self.intensity, self.labels, [1.0, 10.0, 10.0], 9)
        assert not p.data[:, :, :, :3].any()  # x < 0 region
        assert p.data[0, 4, 4, 4] == self.intensity.at(1, 10, 10)

    def test_label_channel_encoding(self):
        p = extract_patch(self.intensity, self.labels, [10.0, 10.0, 10.0], 5)
        raw = self.labels.data[0, 8:13, 8:13, 8:13].astype(np.float32)
        assert np.allclose(p.data[1], raw / 3.0)
        idx = np.argwhere(raw == 3)
        if len(idx):
            z, y, x = idx[0]
            assert p.data[1, z, y, x] == 1.0

    def test_even_size_rejected(self):
        with pytest.raises(ConfigError):
            extract_patch(self.intensity, self.labels, [10, 10, 10], 8)

    def test_shift_consistency(self):
        a = extract_patch(self.intensity, self.labels, [10.0, 10.0, 10.0], 7)
        b = extract_patch(self.intensity, self.labels, [11.0, 10.0, 10.0], 7)
        assert np.array_equal(a.data[0, :, :, 1:], b.data[0, :, :, :6])

    def test_nearest_voxel_centering(self):
        a = extract_patch(self.intensity, self.labels, [10.4, 9.6, 10.0], 7)
        b = extract_patch(self.intensity, self.labels, [10.0, 10.0, 10.0], 7)
        assert np.array_equal(a.data, b.data)

    def test_onehot_encoding(self):
        p = extract_patch(self.intensity, self.labels, [10.0, 10.0, 10.0], 5,
                          encoding="onehot")
        assert p.data.shape == (5, 5, 5, 5)
        codes = self.labels.data[0, 8:13, 8:13, 8:13]
        for c in range(4):
            assert np.array_equal(p.data[1 + c], (codes == c).astype(np.float32))
        # exactly one indicator fires per voxel inside the volume
        assert np.array_equal(p.data[1:].sum(axis=0), np.ones((5, 5, 5), np.float32))

    def test_unknown_encoding_rejected(self):
        with pytest.raises(ConfigError):
            extract_patch(self.intensity, self.labels, [10, 10, 10], 5, encoding="rgb")


class TestFoldPlan:
    def test_ten_patients_five_folds(self):
        ids = [f"p{i}" for i in range(10)]
        plan = plan_folds(ids, k=5, seed=1)
        tested = []
        for f in plan.folds:
            assert len(f.test) == 2
            tested.extend(f.test)
        assert sorted(tested) == sorted(ids)

    def test_187_patients_fold_sizes(self):
        ids = [f"p{i:03d}" for i in range(187)]
        plan = plan_folds(ids, k=5, val_frac=0.10, seed=2)
        sizes = sorted((len(f.test) for f in plan.folds), reverse=True)
        assert sizes == [38, 38, 37, 37, 37]
        for f in plan.folds:
            n_rest = 187 - len(f.test)
            assert len(f.val) == int(np.ceil(0.10 * n_rest))
            assert set(f.train) | set(f.val) | set(f.test) == set(ids)
            assert not (set(f.train) & set(f.val))
            assert not (set(f.train) & set(f.test))
            assert not (set(f.val) & set(f.test))

    def test_deterministic(self):
        ids = [f"p{i}" for i in range(23)]
        assert plan_folds(ids, seed=9) == plan_folds(ids, seed=9)
        assert plan_folds(ids, seed=9) != plan_folds(ids, seed=10)

    def test_input_order_irrelevant(self):
        ids = [f"p{i}" for i in range(12)]
        assert plan_folds(ids, seed=3) == plan_folds(ids[::-1], seed=3)

    def test_too_few_patients(self):
        with pytest.raises(ConfigError):
            plan_folds(["a", "b"], k=5)

    def test_round_trip_dict(self):
        plan = plan_folds([f"p{i}" for i in range(11)], seed=4)
        assert FoldPlan.from_dict(plan.to_dict()) == plan


class TestManifestCsv:
    def test_round_trip(self, tmp_path):
        rows = [
            ManifestRow("p1", 1.5, 2.5, 3.5, 2.0, 1, "patches/p_00001.mvol"),
            ManifestRow("p0", -1.0, 0.5, 4.0, 1.0, 0, "patches/p_00000.mvol"),
        ]
        write_manifest_csv(rows, tmp_path / "m.csv")
        back = read_manifest_csv(tmp_path / "m.csv")
        assert back == sorted(rows, key=lambda r: r.key())
