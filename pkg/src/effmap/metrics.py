"""Evaluation statistics: ROC/AUC, operating point, McNemar, and the
Wilcoxon-Mann-Whitney test.

Classification convention everywhere: predict positive iff score >= threshold.
Tail probabilities use erfc directly, so there is no statistics-package
dependency in the library itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateInputError, PairingError


@dataclass(frozen=True)
class RocCurve:
    """ROC points ordered from (0,0) to (1,1); thresholds descend with them."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise PairingError(f"{scores.size} scores vs {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise DegenerateInputError("labels must be 0 or 1")
    labels = labels.astype(np.int64)
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise DegenerateInputError("need at least one positive and one negative label")
    return scores, labels


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score threshold, endpoints (0,0) and (1,1)."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    thr = np.unique(scores)[::-1]
    # counts of scores >= threshold, per class
    pos_scores = np.sort(scores[labels == 1])
    neg_scores = np.sort(scores[labels == 0])
    tp = n_pos - np.searchsorted(pos_scores, thr, side="left")
    fp = n_neg - np.searchsorted(neg_scores, thr, side="left")
    thresholds = np.concatenate(([np.inf], thr, [-np.inf]))
    tpr = np.concatenate(([0.0], tp / n_pos, [1.0]))
    fpr = np.concatenate(([0.0], fp / n_neg, [1.0]))
    return RocCurve(thresholds, fpr, tpr, n_pos, n_neg)


def auc(scores, labels) -> float:
    """Tie-aware pairwise AUC: P(s+ > s-) + 0.5*P(s+ == s-).

    Computed from midranks, which is algebraically identical to the
    pairwise enumeration and to the trapezoidal area under roc_curve.
    """
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def trapezoid_auc(curve: RocCurve) -> float:
    """Trapezoidal area under an ROC curve."""
    return float(_trapezoid(curve.tpr, curve.fpr))


def operating_point(curve: RocCurve) -> tuple[float, float, float]:
    """Threshold maximizing Youden J = TPR - FPR; ties break toward lower FPR.

    Returns (threshold, sensitivity, specificity).  J values within 1e-12
    of the maximum count as tied, so equal rational fractions that differ
    in the last float bit do not steal the tie-break.
    """
    j = curve.tpr - curve.fpr
    candidates = np.nonzero(j >= j.max() - 1e-12)[0]
    idx = int(candidates[0])  # FPR-ascending curve: first tie has lowest FPR
    return (
        float(curve.thresholds[idx]),
        float(curve.tpr[idx]),
        float(1.0 - curve.fpr[idx]),
    )


def confusion_stats(scores, labels, threshold: float) -> tuple[float, float, float]:
    """(sensitivity, specificity, accuracy) at a fixed threshold."""
    scores, labels = _check_binary(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    tn = int(np.sum(~pred & ~pos))
    sens = tp / int(pos.sum())
    spec = tn / int((~pos).sum())
    acc = (tp + tn) / labels.size
    return (sens, spec, acc)


def chi2_sf_1df(chi2: float) -> float:
    """Survival function of chi-squared with 1 df, via erfc."""
    if chi2 <= 0:
        return 1.0
    return math.erfc(math.sqrt(chi2 / 2.0))


def mcnemar(correct_a, correct_b) -> tuple[int, int, float, float]:
    """McNemar's test on paired correctness indicators.

    Returns (b, c, chi2, p) with b = #(a right, b wrong),
    c = #(a wrong, b right); chi2 uses the continuity correction
    (|b-c|-1)^2/(b+c) and p comes from the chi-squared(1) tail.
    """
    a = np.asarray(correct_a, dtype=bool).ravel()
    bb = np.asarray(correct_b, dtype=bool).ravel()
    if a.shape != bb.shape:
        raise PairingError(f"paired inputs differ in length: {a.size} vs {bb.size}")
    b = int(np.sum(a & ~bb))
    c = int(np.sum(~a & bb))
    if b + c == 0:
        return (b, c, 0.0, 1.0)
    chi2 = (max(abs(b - c) - 1, 0)) ** 2 / (b + c)
    return (b, c, float(chi2), chi2_sf_1df(chi2))


def _u_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """U = #{(i,j): x_i > y_j} + 0.5 * #{x_i == y_j}."""
    gt = (x[:, None] > y[None, :]).sum()
    eq = (x[:, None] == y[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def wilcoxon_mann_whitney(x, y, exact_limit: int = 10) -> tuple[float, float]:
    """Two-sided rank-sum test; exact enumeration when len(x)+len(y) <= exact_limit.

    The asymptotic branch uses the normal approximation with midranks,
    tie-corrected variance, and a 0.5 continuity correction.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise DegenerateInputError("both samples must be non-empty")
    n, m = x.size, y.size
    u_obs = _u_statistic(x, y)
    mu = n * m / 2.0
    if n + m <= exact_limit:
        pooled = np.concatenate([x, y])
        total = 0
        extreme = 0
        dev = abs(u_obs - mu)
        for idx in combinations(range(n + m), n):
            sel = np.zeros(n + m, dtype=bool)
            sel[list(idx)] = True
            u = _u_statistic(pooled[sel], pooled[~sel])
            total += 1
            if abs(u - mu) >= dev - 1e-12:
                extreme += 1
        return (u_obs, extreme / total)
    pooled = np.concatenate([x, y])
    big_n = n + m
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts**3 - counts)).sum()) / (big_n * (big_n - 1))
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0:
        return (u_obs, 1.0)
    z = max(abs(u_obs - mu) - 0.5, 0.0) / math.sqrt(var)
    return (u_obs, math.erfc(z / math.sqrt(2.0)))


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("threshold,fpr,tpr\n")
        for t, fp, tp in zip(curve.thresholds, curve.fpr, curve.tpr):
            f.write(f"{float(t)!r},{float(fp)!r},{float(tp)!r}\n")
