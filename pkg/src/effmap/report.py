"""Figure emission: a hand-written SVG for the ROC (stable, greppable
polylines) plus matplotlib renderings for human consumption."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DataError  # noqa: E402
from .metrics import RocCurve, trapezoid_auc  # noqa: E402
from .volgrid import Volume  # noqa: E402

_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def render_roc_svg(curves: list[RocCurve], labels: list[str], out_path) -> None:
    """Unit-square ROC plot: one polyline per curve, dashed diagonal,
    legend with AUC to 3 decimals."""
    if len(curves) < 1:
        raise DataError("need at least one curve")
    if len(labels) != len(curves):
        raise DataError(f"{len(curves)} curves but {len(labels)} labels")
    width, height = 640, 520
    ml, mt, mr, mb = 60, 20, 20, 60
    pw, ph = width - ml - mr, height - mt - mb

    def px(f):  # fpr -> x
        return ml + f * pw

    def py(t):  # tpr -> y (svg y grows downward)
        return mt + (1.0 - t) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(1)}" y2="{py(1)}" '
        'stroke="#999999" stroke-width="1" stroke-dasharray="6,4"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 20}" text-anchor="middle" '
        'font-size="14">false positive rate</text>',
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {mt + ph / 2:.1f})">true positive rate</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{px(tick):.1f}" y="{mt + ph + 18}" text-anchor="middle" '
            f'font-size="12">{tick:g}</text>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{py(tick) + 4:.1f}" text-anchor="end" '
            f'font-size="12">{tick:g}</text>'
        )
    for i, (curve, label) in enumerate(zip(curves, labels)):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(
            f"{px(f):.2f},{py(t):.2f}" for f, t in zip(curve.fpr, curve.tpr)
        )
        parts.append(
            f'<polyline class="roc-curve" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{pts}"/>'
        )
        auc_val = trapezoid_auc(curve)
        ly = mt + 18 + 18 * i
        parts.append(
            f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 125}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        text = label if "AUC" in label else f"{label} (AUC={auc_val:.3f})"
        parts.append(
            f'<text x="{ml + pw - 120}" y="{ly}" font-size="12">{text}</text>'
        )
    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def render_roc_png(curves: dict[str, RocCurve], aucs: dict[str, float], out_path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=1)
    for name, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, lw=1.6, label=f"{name} (AUC={aucs[name]:.3f})")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_map_png(prob_map: Volume, intensity: Volume, out_path) -> None:
    """Mid-volume slices of a probability map over the anatomy."""
    nx, ny, nz = prob_map.dims
    cuts = [("axial", prob_map.data[0][nz // 2], intensity.data[0][nz // 2]),
            ("coronal", prob_map.data[0][:, ny // 2, :], intensity.data[0][:, ny // 2, :]),
            ("sagittal", prob_map.data[0][:, :, nx // 2], intensity.data[0][:, :, nx // 2])]
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    for ax, (name, sl, anat) in zip(axes, cuts):
        ax.imshow(anat, cmap="gray", origin="lower")
        im = ax.imshow(
            np.ma.masked_where(sl <= 0, sl), cmap="hot", origin="lower",
            vmin=0, vmax=1, alpha=0.6,
        )
        ax.set_title(name)
        ax.axis("off")
    fig.colorbar(im, ax=axes, shrink=0.8, label="p(positive response)")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_history_png(history: dict, out_path) -> None:
    fig, ax1 = plt.subplots(figsize=(6, 4))
    epochs = np.arange(1, len(history["train_loss"]) + 1)
    ax1.plot(epochs, history["train_loss"], c="#1f77b4", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="#1f77b4")
    ax2 = ax1.twinx()
    ax2.plot(epochs, history["val_accuracy"], c="#d62728", label="val accuracy")
    ax2.set_ylabel("val accuracy", color="#d62728")
    ax2.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
