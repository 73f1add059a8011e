"""Stimulation-sphere kernel: current-to-radius lookup, uniform sphere
rasterization, and the positive-over-null merge rule."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OutOfGridError
from .volgrid import Volume, voxel_to_world, world_to_voxel

log = logging.getLogger(__name__)

# Empirical lookup: applied current (mA) -> stimulation sphere radius (mm).
RADIUS_KNOTS = (
    (1.0, 1.80),
    (2.0, 2.42),
    (3.0, 2.94),
    (4.0, 3.33),
    (5.0, 3.72),
    (6.0, 4.05),
    (7.0, 4.35),
)
UNDER_ONE_RADIUS_MM = 1.00


@dataclass(frozen=True)
class RadiusTable:
    """Current->radius knots with a constant radius below the first knot
    and a clamp above the last one."""

    knots: tuple = RADIUS_KNOTS
    under_first_mm: float = UNDER_ONE_RADIUS_MM

    def __post_init__(self):
        currents = [c for c, _ in self.knots]
        radii = [r for _, r in self.knots]
        if sorted(currents) != currents or len(set(currents)) != len(currents):
            raise DomainError("radius table currents must be strictly increasing")
        if sorted(radii) != radii or len(set(radii)) != len(radii):
            raise DomainError("radius table radii must be strictly increasing")

    def radius_for_current(self, current_ma: float) -> float:
        if current_ma <= 0:
            raise DomainError(f"current must be > 0 mA, got {current_ma}")
        currents = np.array([c for c, _ in self.knots])
        radii = np.array([r for _, r in self.knots])
        if current_ma < currents[0]:
            return float(self.under_first_mm)
        if current_ma > currents[-1]:
            log.warning(
                "current %.3g mA above table end (%.3g mA); radius clamped to %.3g mm",
                current_ma,
                currents[-1],
                radii[-1],
            )
            return float(radii[-1])
        return float(np.interp(current_ma, currents, radii))


DEFAULT_TABLE = RadiusTable()


def radius_for_current(current_ma: float, table: RadiusTable = DEFAULT_TABLE) -> float:
    """Sphere radius (mm) for an applied current (mA)."""
    return table.radius_for_current(current_ma)


@dataclass(frozen=True)
class SpherePdf:
    """Uniform probability mass over the voxels inside one stimulation sphere.

    indices: (N, 3) int array of (x, y, z) voxel indices; every voxel
    carries mass 1/N so the kernel integrates to exactly 1.
    """

    indices: np.ndarray
    center_mm: tuple[float, float, float]
    radius_mm: float

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def mass_per_voxel(self) -> float:
        return 1.0 / self.n


def rasterize_sphere(grid: Volume, center_mm, radius_mm: float) -> SpherePdf:
    """Voxels of `grid` whose centers lie within `radius_mm` of `center_mm`.

    Falls back to the single nearest voxel (mass 1) when no voxel center
    qualifies.  Raises OutOfGridError when the center is farther than
    radius + 2*max(voxel_size) outside the grid.
    """
    if radius_mm <= 0:
        raise DomainError(f"radius must be > 0 mm, got {radius_mm}")
    center_mm = np.asarray(center_mm, dtype=np.float64)
    nx, ny, nz = grid.dims
    cv = world_to_voxel(grid, center_mm)
    clamped = np.clip(cv, 0.0, np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64))
    nearest_world = voxel_to_world(grid, np.rint(clamped))
    margin = radius_mm + 2.0 * max(grid.voxel_size)
    if np.linalg.norm(center_mm - voxel_to_world(grid, clamped)) > margin:
        raise OutOfGridError(
            f"sphere center {tuple(center_mm)} is more than {margin:.3g} mm outside the grid"
        )

    # candidate lattice box in voxel space, then exact world-distance test
    reach = radius_mm / np.array(grid.voxel_size)
    lo = np.maximum(np.floor(cv - reach - 1), 0).astype(np.int64)
    hi = np.minimum(np.ceil(cv + reach + 1), [nx - 1, ny - 1, nz - 1]).astype(np.int64)
    xs = np.arange(lo[0], hi[0] + 1)
    ys = np.arange(lo[1], hi[1] + 1)
    zs = np.arange(lo[2], hi[2] + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    cand = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    if cand.size:
        world = voxel_to_world(grid, cand.astype(np.float64))
        dist = np.linalg.norm(world - center_mm, axis=1)
        inside = cand[dist <= radius_mm]
    else:
        inside = np.empty((0, 3), dtype=np.int64)
    if inside.shape[0] == 0:
        inside = np.rint(clamped)[np.newaxis].astype(np.int64)
        _ = nearest_world  # nearest voxel carries all the mass
    # sort for a deterministic order regardless of meshgrid internals
    order = np.lexsort((inside[:, 0], inside[:, 1], inside[:, 2]))
    inside = np.ascontiguousarray(inside[order])
    return SpherePdf(inside, tuple(float(v) for v in center_mm), float(radius_mm))


# labeled-mask codes
MASK_UNLABELED = 0
MASK_NULL = 1
MASK_POSITIVE = 2


def merge_response_masks(positive: np.ndarray, null: np.ndarray, grid: Volume) -> Volume:
    """Combine positive/null voxel index sets into one labeled mask.

    Overlap resolves in favor of the positive response.  Returns a uint8
    volume with codes {0: unlabeled, 1: null, 2: positive}.
    """
    nx, ny, nz = grid.dims
    out = np.zeros((1, nz, ny, nx), dtype=np.uint8)
    for indices, code in ((null, MASK_NULL), (positive, MASK_POSITIVE)):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        if idx.size:
            out[0, idx[:, 2], idx[:, 1], idx[:, 0]] = code
    return Volume(out, grid.voxel_size, np.array(grid.affine))
