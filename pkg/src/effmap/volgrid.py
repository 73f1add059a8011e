"""3D multi-channel volume container, grid geometry, and the MVOL file format.

Layout convention
-----------------
Volume data is stored as a C-contiguous numpy array of shape
(channels, nz, ny, nx), so the flat index of voxel (x, y, z, c) is
x + nx*(y + ny*(z + nz*c)).  Point coordinates are always ordered
(x, y, z); array axes are ordered (c, z, y, x).

The affine maps homogeneous voxel coordinates (x, y, z, 1) to world
millimetres; voxel (i, j, k) has its *center* at affine @ (i, j, k, 1)
with no half-voxel offset.

MVOL format
-----------
    bytes 0..3    magic "MVL1"
    bytes 4..7    header length (u32, little endian)
    header        UTF-8 JSON: dims, channels, voxel_size_mm,
                  affine (16 numbers, row-major), dtype
    payload       raw little-endian voxel data in the flat layout above

Writing then reading a volume is bit-exact on the payload.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    GeometryError,
    ShapeError,
    SizeMismatchError,
    UnknownDtypeError,
)

MAGIC = b"MVL1"

_DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}
_DTYPE_NAMES = {np.dtype("<f4"): "float32", np.dtype("u1"): "uint8"}


def _readonly_view(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.setflags(write=False)
    return view


@dataclass(frozen=True)
class Volume:
    """Immutable 3D (optionally multi-channel) scalar grid.

    data: (channels, nz, ny, nx) array, dtype float32 or uint8.
    voxel_size: (sx, sy, sz) in mm, informational; geometry lives in the
    affine.
    """

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = None  # type: ignore[assignment]
    affine_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3:
            data = data[np.newaxis]
        if data.ndim != 4:
            raise ShapeError(f"volume data must be 3D or 4D, got ndim={data.ndim}")
        if data.dtype == np.float32:
            data = data.astype("<f4", copy=False)
        elif data.dtype == np.uint8:
            data = data.astype("u1", copy=False)
        else:
            raise UnknownDtypeError(f"unsupported volume dtype {data.dtype}")
        data = np.ascontiguousarray(data)
        object.__setattr__(self, "data", _readonly_view(data))

        vs = tuple(float(v) for v in self.voxel_size)
        if len(vs) != 3 or any(v <= 0 for v in vs):
            raise GeometryError(f"voxel_size components must be > 0, got {vs}")
        object.__setattr__(self, "voxel_size", vs)

        affine = self.affine
        if affine is None:
            affine = np.diag([vs[0], vs[1], vs[2], 1.0])
        affine = np.asarray(affine, dtype=np.float64)
        if affine.shape != (4, 4):
            raise GeometryError(f"affine must be 4x4, got {affine.shape}")
        if abs(np.linalg.det(affine[:3, :3])) <= 1e-9:
            raise GeometryError("affine upper 3x3 block is singular")
        affine = np.ascontiguousarray(affine)
        object.__setattr__(self, "affine", _readonly_view(affine))
        object.__setattr__(self, "affine_inv", _readonly_view(np.linalg.inv(affine)))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)."""
        c, nz, ny, nx = self.data.shape
        return (nx, ny, nz)

    @property
    def dtype_name(self) -> str:
        return _DTYPE_NAMES[self.data.dtype]

    def channel(self, c: int) -> np.ndarray:
        """Read-only (nz, ny, nx) view of one channel."""
        return self.data[c]

    def at(self, x: int, y: int, z: int, c: int = 0):
        return self.data[c, z, y, x]

    def with_data(self, data: np.ndarray) -> "Volume":
        """New volume on the same grid with different payload."""
        return Volume(data, self.voxel_size, np.array(self.affine))


def voxel_to_world(vol: Volume, pts) -> np.ndarray:
    """Map continuous voxel coordinates (..., 3) to world mm."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ vol.affine[:3, :3].T + vol.affine[:3, 3]


def world_to_voxel(vol: Volume, pts) -> np.ndarray:
    """Map world mm points (..., 3) to continuous voxel coordinates."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ vol.affine_inv[:3, :3].T + vol.affine_inv[:3, 3]


def _gather(vol: Volume, channel: int, ix, iy, iz) -> np.ndarray:
    """Voxel values at integer indices, 0 outside the grid."""
    nx, ny, nz = vol.dims
    valid = (
        (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    )
    out = np.zeros(ix.shape, dtype=np.float64)
    if np.any(valid):
        data = vol.data[channel]
        out[valid] = data[iz[valid], iy[valid], ix[valid]]
    return out


def trilinear_sample(vol: Volume, pts, channel: int = 0) -> np.ndarray:
    """Trilinear interpolation at world points; 0 outside the grid.

    Exact at voxel centers; a convex combination of the 8 surrounding
    voxels elsewhere.  Accepts a single point or an (..., 3) array.
    """
    if channel >= vol.channels:
        raise ShapeError(f"channel {channel} out of range ({vol.channels} channels)")
    pts = np.asarray(pts, dtype=np.float64)
    scalar = pts.ndim == 1
    v = world_to_voxel(vol, pts.reshape(-1, 3))
    f = np.floor(v)
    t = v - f
    f = f.astype(np.int64)
    acc = np.zeros(v.shape[0], dtype=np.float64)
    for ox in (0, 1):
        wx = t[:, 0] if ox else 1.0 - t[:, 0]
        for oy in (0, 1):
            wy = t[:, 1] if oy else 1.0 - t[:, 1]
            for oz in (0, 1):
                wz = t[:, 2] if oz else 1.0 - t[:, 2]
                w = wx * wy * wz
                vals = _gather(vol, channel, f[:, 0] + ox, f[:, 1] + oy, f[:, 2] + oz)
                acc += w * vals
    return acc[0] if scalar else acc.reshape(pts.shape[:-1])


def nearest_sample(vol: Volume, pts, channel: int = 0) -> np.ndarray:
    """Nearest-neighbor lookup at world points; 0 outside the grid.

    Ties at half-integer voxel coordinates round to even (numpy rint).
    """
    if channel >= vol.channels:
        raise ShapeError(f"channel {channel} out of range ({vol.channels} channels)")
    pts = np.asarray(pts, dtype=np.float64)
    scalar = pts.ndim == 1
    v = world_to_voxel(vol, pts.reshape(-1, 3))
    idx = np.rint(v).astype(np.int64)
    out = _gather(vol, channel, idx[:, 0], idx[:, 1], idx[:, 2])
    return out[0] if scalar else out.reshape(pts.shape[:-1])


def z_normalize(vol: Volume, mask: Volume | None = None) -> Volume:
    """Shift/scale so the (masked) voxels have mean 0 and std 1.

    The mask, when given, must share the volume's dims; voxels where its
    first channel is > 0 define the statistics, but the whole volume is
    transformed.  Constant input maps to all zeros.
    """
    if mask is not None and mask.dims != vol.dims:
        raise ShapeError(f"mask dims {mask.dims} != volume dims {vol.dims}")
    values = vol.data.astype(np.float64)
    if mask is not None:
        sel = np.broadcast_to(mask.data[0] > 0, values.shape)
        pool = values[sel]
    else:
        pool = values.reshape(-1)
    mean = pool.mean()
    std = pool.std()
    if std < 1e-12:
        out = np.zeros(values.shape, dtype=np.float32)
    else:
        out = ((values - mean) / std).astype(np.float32)
    return Volume(out, vol.voxel_size, np.array(vol.affine))


def write_mvol(vol: Volume, path) -> None:
    header = {
        "dims": list(vol.dims),
        "channels": vol.channels,
        "voxel_size_mm": list(vol.voxel_size),
        "affine": [float(v) for v in np.asarray(vol.affine).ravel()],
        "dtype": vol.dtype_name,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(vol.data, dtype=_DTYPES[vol.dtype_name]).tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload)


def read_mvol(path) -> Volume:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unparseable header: {e}") from e
    try:
        dims = [int(d) for d in header["dims"]]
        channels = int(header["channels"])
        voxel_size = tuple(float(v) for v in header["voxel_size_mm"])
        affine = np.array(header["affine"], dtype=np.float64).reshape(4, 4)
        dtype_name = header["dtype"]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: malformed header fields: {e}") from e
    if dtype_name not in _DTYPES:
        raise UnknownDtypeError(f"{path}: unknown dtype {dtype_name!r}")
    dtype = _DTYPES[dtype_name]
    nx, ny, nz = dims
    expect = nx * ny * nz * channels * dtype.itemsize
    payload = raw[8 + hlen :]
    if len(payload) != expect:
        raise SizeMismatchError(
            f"{path}: payload is {len(payload)} bytes, header requires {expect}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(channels, nz, ny, nx)
    return Volume(data.copy(), voxel_size, affine)
