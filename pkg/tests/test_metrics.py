import math

import numpy as np
import pytest
import scipy.stats

from effmap.errors import DegenerateInputError, PairingError
from effmap.metrics import (
    auc,
    confusion_stats,
    mcnemar,
    operating_point,
    roc_curve,
    trapezoid_auc,
    wilcoxon_mann_whitney,
)
from effmap.rng import make_rng


def brute_force_auc(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestRocCurve:
    def test_perfect_separation_passes_corner(self):
        curve = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        pts = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (0.0, 1.0) in pts

    def test_all_tied_scores(self):
        curve = roc_curve([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert curve.fpr[0] == 0 and curve.tpr[0] == 0
        assert curve.fpr[-1] == 1 and curve.tpr[-1] == 1
        assert trapezoid_auc(curve) == pytest.approx(0.5)

    def test_derived_points(self):
        curve = roc_curve([0.8, 0.3, 0.5, 0.1], [1, 1, 0, 0])
        pts = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (0.0, 0.5) in pts
        assert (0.5, 0.5) in pts

    def test_monotone_and_endpoints(self):
        rng = make_rng(3)
        scores = rng.normal(size=60)
        labels = rng.integers(0, 2, size=60)
        labels[0], labels[1] = 0, 1
        curve = roc_curve(scores, labels)
        assert (np.diff(curve.fpr) >= 0).all()
        assert (np.diff(curve.tpr) >= 0).all()
        assert (curve.fpr[0], curve.tpr[0]) == (0, 0)
        assert (curve.fpr[-1], curve.tpr[-1]) == (1, 1)

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateInputError):
            roc_curve([0.1, 0.2], [1, 1])


class TestAuc:
    def test_perfect(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_complete_tie(self):
        assert auc([0.6, 0.6], [1, 0]) == 0.5

    def test_derived_three_quarters(self):
        assert auc([0.8, 0.3, 0.5, 0.1], [1, 1, 0, 0]) == pytest.approx(0.75)

    def test_matches_brute_force_and_trapezoid(self):
        rng = make_rng(17)
        for _ in range(300):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.normal(size=n), 1)  # ties on purpose
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                continue
            a = auc(scores, labels)
            assert a == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)
            assert a == pytest.approx(trapezoid_auc(roc_curve(scores, labels)), abs=1e-12)

    def test_antisymmetry(self):
        rng = make_rng(23)
        scores = rng.normal(size=80)
        labels = rng.integers(0, 2, size=80)
        labels[:2] = [0, 1]
        assert auc(-scores, labels) == pytest.approx(1.0 - auc(scores, labels), abs=1e-12)

    def test_rank_invariance(self):
        rng = make_rng(29)
        scores = rng.normal(size=50)
        labels = rng.integers(0, 2, size=50)
        labels[:2] = [0, 1]
        base = auc(scores, labels)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert auc(3.0 * scores + 11.0, labels) == pytest.approx(base, abs=1e-12)

    def test_matches_scipy_rank_statistic(self):
        rng = make_rng(31)
        scores = np.round(rng.normal(size=100), 1)
        labels = rng.integers(0, 2, size=100)
        labels[:2] = [0, 1]
        u = scipy.stats.mannwhitneyu(scores[labels == 1], scores[labels == 0]).statistic
        n1, n0 = (labels == 1).sum(), (labels == 0).sum()
        assert auc(scores, labels) == pytest.approx(u / (n1 * n0), abs=1e-12)


class TestOperatingPoint:
    def test_perfect_classifier(self):
        curve = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        _, sens, spec = operating_point(curve)
        assert sens == 1.0 and spec == 1.0

    def test_tie_breaks_toward_specificity(self):
        curve = roc_curve([0.9, 0.8, 0.4, 0.7, 0.3, 0.2], [1, 1, 1, 0, 0, 0])
        thr, sens, spec = operating_point(curve)
        assert thr == pytest.approx(0.8)
        assert sens == pytest.approx(2 / 3)
        assert spec == 1.0

    def test_all_tied_returns_origin(self):
        curve = roc_curve([0.5, 0.5, 0.5], [1, 0, 1])
        thr, sens, spec = operating_point(curve)
        assert sens == 0.0 and spec == 1.0
        assert thr == np.inf

    def test_point_invariant_under_monotone_transform(self):
        rng = make_rng(37)
        scores = rng.normal(size=60)
        labels = rng.integers(0, 2, size=60)
        labels[:2] = [0, 1]
        _, s1, p1 = operating_point(roc_curve(scores, labels))
        _, s2, p2 = operating_point(roc_curve(np.exp(scores), labels))
        assert (s1, p1) == (s2, p2)


class TestMcnemar:
    def test_fifteen_five(self):
        correct_a = [True] * 15 + [False] * 5 + [True] * 30
        correct_b = [False] * 15 + [True] * 5 + [True] * 30
        b, c, chi2, p = mcnemar(correct_a, correct_b)
        assert (b, c) == (15, 5)
        assert chi2 == pytest.approx(4.05)
        assert p == pytest.approx(0.0441, abs=0.0005)

    def test_symmetric_disagreement(self):
        a = [True, False] * 10
        b = [False, True] * 10
        bb, cc, chi2, p = mcnemar(a, b)
        assert bb == cc == 10
        assert chi2 == 0.0 and p == 1.0

    def test_no_disagreement(self):
        a = [True, False, True]
        assert mcnemar(a, a) == (0, 0, 0.0, 1.0)

    def test_swap_symmetry(self):
        rng = make_rng(41)
        a = rng.random(100) < 0.7
        b = rng.random(100) < 0.6
        ba, ca, chi2a, pa = mcnemar(a, b)
        bb, cb, chi2b, pb = mcnemar(b, a)
        assert (ba, ca) == (cb, bb)
        assert chi2a == chi2b and pa == pb

    def test_p_matches_scipy_chi2_tail(self):
        for b_, c_ in ((15, 5), (30, 12), (3, 9)):
            chi2 = (abs(b_ - c_) - 1) ** 2 / (b_ + c_)
            a = [True] * b_ + [False] * c_
            b = [False] * b_ + [True] * c_
            _, _, chi2_got, p = mcnemar(a, b)
            assert chi2_got == pytest.approx(chi2)
            assert p == pytest.approx(scipy.stats.chi2.sf(chi2, df=1), rel=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(PairingError):
            mcnemar([True], [True, False])


class TestWilcoxonMannWhitney:
    def test_exact_disjoint_case(self):
        u, p = wilcoxon_mann_whitney([1, 2, 3], [4, 5, 6])
        assert u == 0.0
        assert p == pytest.approx(0.1, abs=1e-12)

    def test_identical_multisets(self):
        _, p = wilcoxon_mann_whitney([1, 2, 3], [1, 2, 3])
        assert p >= 0.99

    def test_swap_symmetry(self):
        rng = make_rng(43)
        x = rng.normal(size=20)
        y = rng.normal(size=25) + 0.4
        _, p1 = wilcoxon_mann_whitney(x, y)
        _, p2 = wilcoxon_mann_whitney(y, x)
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_exact_matches_scipy(self):
        x = [1.2, 3.4, 0.1, 2.2]
        y = [4.5, 2.9, 6.1]
        _, p = wilcoxon_mann_whitney(x, y)
        ref = scipy.stats.mannwhitneyu(x, y, alternative="two-sided", method="exact")
        assert p == pytest.approx(ref.pvalue, abs=1e-12)

    def test_asymptotic_close_to_scipy(self):
        rng = make_rng(47)
        x = np.round(rng.normal(size=40), 1)
        y = np.round(rng.normal(size=35) + 0.3, 1)
        _, p = wilcoxon_mann_whitney(x, y)
        ref = scipy.stats.mannwhitneyu(x, y, alternative="two-sided", method="asymptotic")
        assert p == pytest.approx(ref.pvalue, rel=1e-9)

    def test_empty_sample(self):
        with pytest.raises(DegenerateInputError):
            wilcoxon_mann_whitney([], [1.0])


class TestConfusionStats:
    def test_threshold_below_all(self):
        sens, spec, _ = confusion_stats([0.8, 0.3, 0.5, 0.1], [1, 1, 0, 0], -1.0)
        assert sens == 1.0 and spec == 0.0

    def test_threshold_above_all(self):
        sens, spec, _ = confusion_stats([0.8, 0.3, 0.5, 0.1], [1, 1, 0, 0], 2.0)
        assert sens == 0.0 and spec == 1.0

    def test_derived_midpoint(self):
        sens, spec, acc = confusion_stats([0.8, 0.3, 0.5, 0.1], [1, 1, 0, 0], 0.5)
        assert (sens, spec, acc) == (0.5, 0.5, 0.5)
