"""From stimulation records to a supervised dataset: response labeling,
pass-effect exclusion, lowest-current deduplication, 3D patch extraction,
and patient-level fold planning."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import ceil
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, MissingFileError
from .phantom import StimRecord
from .rng import make_rng
from .volgrid import Volume, world_to_voxel

POSITIVE = "positive"
NULL = "null"
EXCLUDED = "excluded"

# anatomical label codes map onto an intensity-like channel
LABEL_CHANNEL_SCALE = 1.0 / 3.0


@dataclass(frozen=True)
class LabeledRecord:
    record: StimRecord
    label: str  # positive | null | excluded

    @property
    def binary(self) -> int:
        return 1 if self.label == POSITIVE else 0


def label_records(records: list[StimRecord]) -> list[LabeledRecord]:
    """Pass effect excludes; otherwise improvement strictly over 50% is positive."""
    out = []
    for r in records:
        if not (0 <= r.improvement_pct <= 100):
            raise DataError(
                f"improvement {r.improvement_pct} outside [0, 100] for {r.patient_id}"
            )
        if r.pass_effect:
            label = EXCLUDED
        elif r.improvement_pct > 50.0:
            label = POSITIVE
        else:
            label = NULL
        out.append(LabeledRecord(r, label))
    return out


def dedup_lowest_current(
    labeled: list[LabeledRecord], eps_mm: float = 0.5
) -> list[LabeledRecord]:
    """Collapse same-site repeats to the lowest current attaining the site's
    best improvement.

    Sites group greedily: a record joins the first existing group of the
    same patient whose seed coordinate lies within eps; ties on current
    break by input order.  Excluded records should be filtered out first.
    """
    groups: list[list[LabeledRecord]] = []
    seeds: list[tuple[str, np.ndarray]] = []
    for lr in labeled:
        placed = False
        c = lr.record.coord()
        for g, (pid, seed_coord) in zip(groups, seeds):
            if pid == lr.record.patient_id and np.linalg.norm(c - seed_coord) <= eps_mm:
                g.append(lr)
                placed = True
                break
        if not placed:
            groups.append([lr])
            seeds.append((lr.record.patient_id, c))
    kept = []
    for g in groups:
        best_improvement = max(x.record.improvement_pct for x in g)
        candidates = [x for x in g if x.record.improvement_pct == best_improvement]
        kept.append(min(candidates, key=lambda x: x.record.current_ma))
    return kept


@dataclass
class Patch:
    """channels x S x S x S tensor centered on a stimulation coordinate.

    Channel 0 is (pre-normalized) intensity.  With the default "scaled"
    encoding, channel 1 holds tissue codes scaled {0,1,2,3} ->
    {0, 1/3, 2/3, 1}; with "onehot", channels 1..4 are per-class
    indicators (5 channels total).
    """

    data: np.ndarray
    label: int
    patient_id: str = ""
    center_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    current_ma: float = 0.0


ENCODING_CHANNELS = {"scaled": 2, "onehot": 5}


def extract_patch(
    intensity: Volume,
    labels: Volume,
    center_mm,
    size: int,
    label: int = 0,
    patient_id: str = "",
    current_ma: float = 0.0,
    encoding: str = "scaled",
) -> Patch:
    """Cube of intensity plus tissue-label channels centered at the voxel
    nearest the coordinate; out-of-volume regions are zero-filled."""
    if size % 2 == 0:
        raise ConfigError(f"patch size must be odd, got {size}")
    if intensity.dims != labels.dims:
        raise ConfigError(f"intensity dims {intensity.dims} != label dims {labels.dims}")
    if encoding not in ENCODING_CHANNELS:
        raise ConfigError(f"unknown label encoding {encoding!r}")
    center_mm = np.asarray(center_mm, dtype=np.float64)
    cv = np.rint(world_to_voxel(intensity, center_mm)).astype(np.int64)
    half = size // 2
    nx, ny, nz = intensity.dims
    out = np.zeros((ENCODING_CHANNELS[encoding], size, size, size), dtype=np.float32)

    lo = cv - half  # (x, y, z) of the patch origin in volume voxels
    src_lo = np.maximum(lo, 0)
    src_hi = np.minimum(lo + size, [nx, ny, nz])
    if np.all(src_hi > src_lo):
        dst_lo = src_lo - lo
        dst_hi = dst_lo + (src_hi - src_lo)
        src = (
            slice(src_lo[2], src_hi[2]),
            slice(src_lo[1], src_hi[1]),
            slice(src_lo[0], src_hi[0]),
        )
        dst = (
            slice(dst_lo[2], dst_hi[2]),
            slice(dst_lo[1], dst_hi[1]),
            slice(dst_lo[0], dst_hi[0]),
        )
        out[0][dst] = intensity.data[0][src]
        codes = labels.data[0][src]
        if encoding == "scaled":
            out[1][dst] = codes.astype(np.float32) * LABEL_CHANNEL_SCALE
        else:
            for c in range(4):
                out[1 + c][dst] = (codes == c).astype(np.float32)
    return Patch(
        data=out,
        label=int(label),
        patient_id=patient_id,
        center_mm=tuple(float(v) for v in center_mm),
        current_ma=float(current_ma),
    )


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "folds": [
                {"train": list(f.train), "val": list(f.val), "test": list(f.test)}
                for f in self.folds
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(
            folds=tuple(
                Fold(tuple(f["train"]), tuple(f["val"]), tuple(f["test"]))
                for f in d["folds"]
            ),
            seed=int(d["seed"]),
        )


def plan_folds(
    patient_ids: list[str], k: int = 5, val_frac: float = 0.10, seed: int = 0
) -> FoldPlan:
    """Patient-level cross-validation plan: every patient tests exactly once;
    validation is ceil(val_frac * non-test) patients of each fold."""
    ids = sorted(set(patient_ids))
    if len(ids) != len(patient_ids):
        raise ConfigError("patient ids must be unique")
    n = len(ids)
    if n < k:
        raise ConfigError(f"need at least k={k} patients, got {n}")
    rng = make_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(n)]
    base, rem = divmod(n, k)
    folds = []
    start = 0
    for f in range(k):
        size = base + (1 if f < rem else 0)
        test = tuple(shuffled[start : start + size])
        start += size
        rest = [p for p in shuffled if p not in set(test)]
        n_val = ceil(val_frac * len(rest))
        folds.append(Fold(train=tuple(rest[n_val:]), val=tuple(rest[:n_val]), test=test))
    return FoldPlan(folds=tuple(folds), seed=seed)


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

MANIFEST_HEADER = ["patient_id", "x_mm", "y_mm", "z_mm", "current_ma", "label", "patch_file"]


@dataclass(frozen=True)
class ManifestRow:
    patient_id: str
    x_mm: float
    y_mm: float
    z_mm: float
    current_ma: float
    label: int
    patch_file: str

    def coord(self) -> np.ndarray:
        return np.array([self.x_mm, self.y_mm, self.z_mm])

    def key(self):
        return (self.patient_id, self.x_mm, self.y_mm, self.z_mm, self.current_ma)


def write_manifest_csv(rows: list[ManifestRow], path) -> None:
    rows = sorted(rows, key=lambda r: r.key())
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.patient_id,
                    repr(r.x_mm),
                    repr(r.y_mm),
                    repr(r.z_mm),
                    repr(r.current_ma),
                    r.label,
                    r.patch_file,
                ]
            )


def read_manifest_csv(path) -> list[ManifestRow]:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"missing dataset manifest {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"{path}: unexpected manifest header {header}")
        for row in reader:
            rows.append(
                ManifestRow(
                    patient_id=row[0],
                    x_mm=float(row[1]),
                    y_mm=float(row[2]),
                    z_mm=float(row[3]),
                    current_ma=float(row[4]),
                    label=int(row[5]),
                    patch_file=row[6],
                )
            )
    return rows
