"""Registration-based baseline: population efficacy probability map in a
common atlas space, projection into a test subject, and cumulative-
probability scoring of candidate coordinates.

The atlas grid is the phantom template grid.  Spatial transforms expose a
forward (subject -> atlas) point map; warp-field inverses are resolved by
fixed-point iteration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError, MissingTransformError, ShapeError
from .phantom import StimRecord, displacement_field
from .stimkernel import RadiusTable, DEFAULT_TABLE, rasterize_sphere
from .volgrid import Volume, trilinear_sample, voxel_to_world


class SpatialTransform:
    """Point map between subject space and atlas space (both in mm)."""

    kind = "identity"

    def forward(self, pts) -> np.ndarray:
        """Subject -> atlas."""
        raise NotImplementedError

    def inverse(self, pts) -> np.ndarray:
        """Atlas -> subject."""
        raise NotImplementedError


class IdentityTransform(SpatialTransform):
    kind = "identity"

    def forward(self, pts):
        return np.asarray(pts, dtype=np.float64).copy()

    def inverse(self, pts):
        return np.asarray(pts, dtype=np.float64).copy()


class AffineTransform(SpatialTransform):
    kind = "affine"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        if abs(np.linalg.det(self.matrix[:3, :3])) <= 1e-9:
            raise GeometryError("affine transform is singular")
        self._inv = np.linalg.inv(self.matrix)

    def forward(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix[:3, :3].T + self.matrix[:3, 3]

    def inverse(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self._inv[:3, :3].T + self._inv[:3, 3]


class WarpFieldTransform(SpatialTransform):
    """forward(x) = x + d(x) with d a 3-channel displacement volume (mm)."""

    kind = "warp-field"

    def __init__(self, displacement: Volume, inverse_tol_mm: float = 0.25, max_iter: int = 50):
        if displacement.channels != 3:
            raise ShapeError("displacement volume must have 3 channels")
        self.displacement = displacement
        self.inverse_tol_mm = inverse_tol_mm
        self.max_iter = max_iter

    def _disp(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        flat = pts.reshape(-1, 3)
        d = np.stack(
            [trilinear_sample(self.displacement, flat, channel=c) for c in range(3)],
            axis=1,
        )
        return d.reshape(pts.shape)

    def forward(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        return pts + self._disp(pts)

    def inverse(self, pts):
        """Damped fixed-point solve of x + d(x) = y.

        The half-step damping keeps the iteration contractive even where
        the displacement Jacobian approaches unit norm; stops once the
        forward residual is safely inside `inverse_tol_mm`.
        """
        y = np.asarray(pts, dtype=np.float64)
        x = y.copy()
        for _ in range(self.max_iter):
            residual = self.forward(x) - y
            if np.linalg.norm(residual, axis=-1).max() < 0.5 * self.inverse_tol_mm:
                break
            x = x - 0.5 * residual
        return x


def transform_from_true_warp(true_warp: Volume) -> SpatialTransform:
    """The phantom's exact subject->atlas transform.

    The phantom stores subject(v) = template(v + w(v)); the same w is
    therefore the forward point map into template (atlas) space.
    """
    return WarpFieldTransform(true_warp)


def simulated_registration(
    true_transform: SpatialTransform,
    grid: Volume,
    error_amplitude_mm: float,
    smoothness_mm: float,
    seed: int,
) -> SpatialTransform:
    """Registration with controlled error: the true transform composed with
    a smooth random displacement of amplitude e.  e = 0 returns the true
    transform unchanged."""
    if error_amplitude_mm < 0:
        raise GeometryError("error amplitude must be >= 0")
    if error_amplitude_mm == 0:
        return true_transform
    err = displacement_field(grid.dims, error_amplitude_mm, smoothness_mm, seed)
    if isinstance(true_transform, WarpFieldTransform):
        base = true_transform.displacement
        if base.dims != grid.dims:
            raise ShapeError("true transform grid does not match the given grid")
        combined = base.data.astype(np.float32) + err.data
    elif isinstance(true_transform, IdentityTransform):
        combined = err.data
    else:
        # general case: evaluate base displacement on the grid voxel centers
        nx, ny, nz = grid.dims
        from .phantom import _voxel_center_grid

        pts = voxel_to_world(grid, _voxel_center_grid(grid.dims).reshape(-1, 3))
        base_disp = true_transform.forward(pts) - pts
        combined = (
            base_disp.T.reshape(3, nz, ny, nx).astype(np.float32) + err.data
        )
    return WarpFieldTransform(Volume(np.asarray(combined, dtype=np.float32), grid.voxel_size, np.array(grid.affine)))


@dataclass(frozen=True)
class EfficacyMap:
    """Per-voxel probability mass on the atlas grid, averaged over the
    unit-mass sphere kernels of the contributing stimulation points."""

    volume: Volume
    n_points: int


def build_efficacy_map(
    records: list[StimRecord],
    transforms: dict[str, SpatialTransform],
    atlas_grid: Volume,
    table: RadiusTable = DEFAULT_TABLE,
) -> EfficacyMap:
    """Average the atlas-space sphere PDFs of (already positive) records.

    Records are summed in sorted order so the result is bitwise
    independent of input permutation.
    """
    ordered = sorted(
        records, key=lambda r: (r.patient_id, r.x_mm, r.y_mm, r.z_mm, r.current_ma)
    )
    nx, ny, nz = atlas_grid.dims
    acc = np.zeros((nz, ny, nx), dtype=np.float64)
    for rec in ordered:
        t = transforms.get(rec.patient_id)
        if t is None:
            raise MissingTransformError(f"no transform for patient {rec.patient_id}")
        center = t.forward(rec.coord())
        pdf = rasterize_sphere(atlas_grid, center, table.radius_for_current(rec.current_ma))
        idx = pdf.indices
        np.add.at(acc, (idx[:, 2], idx[:, 1], idx[:, 0]), pdf.mass_per_voxel)
    n = len(ordered)
    if n > 0:
        acc /= n
    vol = Volume(acc.astype(np.float32), atlas_grid.voxel_size, np.array(atlas_grid.affine))
    return EfficacyMap(volume=vol, n_points=n)


def project_map(emap: EfficacyMap, transform: SpatialTransform, subject_grid: Volume) -> Volume:
    """Pull the atlas map into subject space and renormalize to unit mass.

    Each subject voxel center is pushed through the forward map and the
    atlas map is sampled there trilinearly; renormalization compensates
    the interpolation leakage at boundaries.
    """
    from .phantom import _voxel_center_grid

    nx, ny, nz = subject_grid.dims
    pts = voxel_to_world(subject_grid, _voxel_center_grid(subject_grid.dims).reshape(-1, 3))
    atlas_pts = transform.forward(pts)
    vals = trilinear_sample(emap.volume, atlas_pts, channel=0).reshape(nz, ny, nx)
    total = vals.sum()
    if total > 0:
        vals = vals / total
    return Volume(vals.astype(np.float32), subject_grid.voxel_size, np.array(subject_grid.affine))


def score_coordinate(
    subject_map: Volume,
    coord_mm,
    current_ma: float,
    table: RadiusTable = DEFAULT_TABLE,
) -> float:
    """Cumulative map probability inside the stimulation sphere at coord."""
    pdf = rasterize_sphere(subject_map, coord_mm, table.radius_for_current(current_ma))
    idx = pdf.indices
    data = subject_map.data[0]
    return float(data[idx[:, 2], idx[:, 1], idx[:, 0]].astype(np.float64).sum())


# ---------------------------------------------------------------------------
# score CSV interface (shared with the CNN lane)
# ---------------------------------------------------------------------------

SCORES_CSV_HEADER = ["patient_id", "x_mm", "y_mm", "z_mm", "current_ma", "score", "label"]


@dataclass(frozen=True)
class ScoreRow:
    patient_id: str
    x_mm: float
    y_mm: float
    z_mm: float
    current_ma: float
    score: float
    label: int

    def key(self):
        return (self.patient_id, self.x_mm, self.y_mm, self.z_mm, self.current_ma)


def write_scores_csv(rows: list[ScoreRow], path) -> None:
    rows = sorted(rows, key=lambda r: r.key())
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(SCORES_CSV_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.patient_id,
                    repr(r.x_mm),
                    repr(r.y_mm),
                    repr(r.z_mm),
                    repr(r.current_ma),
                    repr(r.score),
                    r.label,
                ]
            )


def read_scores_csv(path) -> list[ScoreRow]:
    from .errors import DataError, MissingFileError

    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"missing scores file {path}")
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != SCORES_CSV_HEADER:
            raise DataError(f"{path}: unexpected scores header {header}")
        for row in reader:
            rows.append(
                ScoreRow(
                    patient_id=row[0],
                    x_mm=float(row[1]),
                    y_mm=float(row[2]),
                    z_mm=float(row[3]),
                    current_ma=float(row[4]),
                    score=float(row[5]),
                    label=int(row[6]),
                )
            )
    return rows
