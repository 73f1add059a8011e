"""Synthetic cohort generation: template anatomy, per-subject smooth
deformations, a hidden ground-truth efficacy field, and simulated
intraoperative stimulation tracks.

World coordinates equal voxel indices in mm (identity-scaled affine), so a
96 mm cube is a 96^3 grid.  Subjects are deformed copies of one template:
subject(v) = template(v + w(v)) where w is the subject's displacement
field; the forward subject->template point map is therefore x + w(x).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, MissingFileError, ShapeError
from .rng import (
    TAG_BIAS,
    TAG_NOISE,
    TAG_SUBJECT,
    TAG_SURGERY,
    TAG_TEMPLATE,
    TAG_WARP,
    derive_seed,
    make_rng,
)
from .volgrid import (
    Volume,
    nearest_sample,
    read_mvol,
    trilinear_sample,
    voxel_to_world,
    write_mvol,
)

# tissue codes
BACKGROUND_CSF = 0
CORTICAL_GM = 1
DEEP_GM = 2
WHITE_MATTER = 3
N_CLASSES = 4


@dataclass(frozen=True)
class PhantomConfig:
    """Everything that determines a cohort, bar the master seed's value.

    Geometry fields left at None are resolved as fractions of the grid
    size (see `resolve`), so shrinking `dims` scales the whole head.
    """

    dims: tuple[int, int, int] = (96, 96, 96)
    voxel_size_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    class_means: tuple[float, float, float, float] = (20.0, 70.0, 85.0, 110.0)
    class_sigmas: tuple[float, float, float, float] = (1.5, 1.5, 1.5, 1.5)
    brain_radius_mm: float | None = None
    cortex_thickness_mm: float | None = None
    ventricle_radii_mm: tuple[float, float, float] | None = None
    nucleus_offset_mm: tuple[float, float, float] | None = None
    nucleus_radii_mm: tuple[float, float, float] | None = None
    bump_offset_mm: tuple[float, float, float] = (2.0, 1.5, 1.0)
    p_max: float = 0.9
    sigma_eff_mm: float = 3.0
    p_floor: float = 0.05
    warp_amplitude_mm: float = 2.5
    warp_smoothness_mm: float = 16.0
    noise_sigma: float = 3.0
    bias_amplitude: float = 0.1
    tracks_per_subject: int = 4
    samples_per_track: int = 5
    track_jitter_mm: float = 3.0
    track_spacing_mm: float = 1.5
    currents_ma: tuple[float, ...] = (1.0, 2.0, 3.0)
    pass_effect_prob: float = 0.05
    current_couples_response: bool = False
    subjects: int = 20
    seed: int = 42

    def validate(self) -> None:
        if any(d < 32 for d in self.dims):
            raise ConfigError(f"dims must be >= 32 per axis, got {self.dims}")
        if not (0 < self.p_floor <= self.p_max <= 1):
            raise ConfigError(
                f"need 0 < p_floor <= p_max <= 1, got {self.p_floor}, {self.p_max}"
            )
        if self.sigma_eff_mm <= 0:
            raise ConfigError("sigma_eff_mm must be > 0")
        if self.warp_amplitude_mm < 0:
            raise ConfigError("warp_amplitude_mm must be >= 0")
        if self.warp_smoothness_mm <= 0:
            raise ConfigError("warp_smoothness_mm must be > 0")
        if self.subjects < 1:
            raise ConfigError("subjects must be >= 1")
        if len(self.class_means) != N_CLASSES or len(self.class_sigmas) != N_CLASSES:
            raise ConfigError("class_means/class_sigmas must list all four classes")
        geo = self.resolve()
        lo = np.array(geo["nucleus_centers"]).min(axis=0) - geo["nucleus_radii"]
        hi = np.array(geo["nucleus_centers"]).max(axis=0) + geo["nucleus_radii"]
        if (lo < 0).any() or (hi > np.array(self.dims) - 1).any():
            raise ConfigError("nucleus extends outside the grid")

    def resolve(self) -> dict:
        """Concrete geometry in world mm; None fields scale with the grid."""
        s = min(self.dims)
        center = (np.array(self.dims, dtype=np.float64) - 1.0) / 2.0
        brain_r = self.brain_radius_mm if self.brain_radius_mm is not None else 0.44 * s
        cortex_t = (
            self.cortex_thickness_mm
            if self.cortex_thickness_mm is not None
            else 0.06 * s
        )
        vent = (
            np.array(self.ventricle_radii_mm)
            if self.ventricle_radii_mm is not None
            else np.array([0.07, 0.12, 0.09]) * s
        )
        n_off = (
            np.array(self.nucleus_offset_mm)
            if self.nucleus_offset_mm is not None
            else np.array([0.16, 0.0, -0.05]) * s
        )
        n_radii = (
            np.array(self.nucleus_radii_mm)
            if self.nucleus_radii_mm is not None
            else np.array([0.065, 0.09, 0.075]) * s
        )
        centers = np.stack([center - n_off, center + n_off])
        return {
            "center": center,
            "brain_radius": float(brain_r),
            "cortex_thickness": float(cortex_t),
            "ventricle_radii": vent,
            "nucleus_centers": centers,
            "nucleus_radii": n_radii,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        known = {f_.name for f_ in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown phantom config keys: {sorted(unknown)}")
        kwargs = dict(d)
        for key in (
            "dims",
            "voxel_size_mm",
            "class_means",
            "class_sigmas",
            "ventricle_radii_mm",
            "nucleus_offset_mm",
            "nucleus_radii_mm",
            "bump_offset_mm",
            "currents_ma",
        ):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class StimRecord:
    """One intraoperative stimulation event."""

    patient_id: str
    x_mm: float
    y_mm: float
    z_mm: float
    current_ma: float
    improvement_pct: float
    pass_effect: bool
    side_effect: str = ""

    def coord(self) -> np.ndarray:
        return np.array([self.x_mm, self.y_mm, self.z_mm])

    def validate(self) -> None:
        if self.current_ma <= 0:
            raise DataError(f"current must be > 0 mA, got {self.current_ma}")
        if not (0 <= self.improvement_pct <= 100):
            raise DataError(f"improvement must be in [0, 100], got {self.improvement_pct}")


@dataclass(frozen=True)
class EfficacyParams:
    """Ground-truth response field: a Gaussian bump over a floor."""

    bump_center_mm: tuple[float, float, float]
    sigma_mm: float
    p_max: float
    p_floor: float

    def probability(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        d2 = ((pts - np.array(self.bump_center_mm)) ** 2).sum(axis=-1)
        return self.p_floor + (self.p_max - self.p_floor) * np.exp(
            -d2 / (2.0 * self.sigma_mm**2)
        )


@dataclass
class Template:
    intensity: Volume
    labels: Volume
    efficacy: EfficacyParams
    nucleus_centers: np.ndarray  # (2, 3) world mm


@dataclass
class Subject:
    id: str
    intensity: Volume
    labels: Volume
    true_warp: Volume  # 3-channel displacement (mm), subject->template pull-back
    efficacy: EfficacyParams  # subject space
    nucleus_center_mm: np.ndarray  # subject space (targeting reference)
    records: list[StimRecord] = field(default_factory=list)


@dataclass
class Cohort:
    config: PhantomConfig
    template: Template
    subjects: list[Subject]


def _voxel_center_grid(dims) -> np.ndarray:
    """(nz, ny, nx, 3) array of voxel-index coordinates ordered (x, y, z)."""
    nx, ny, nz = dims
    gz, gy, gx = np.meshgrid(
        np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij"
    )
    return np.stack([gx, gy, gz], axis=-1).astype(np.float64)


def build_template(cfg: PhantomConfig, seed: int | None = None) -> Template:
    """Template anatomy: brain sphere, cortical shell, ventricle, bilateral
    deep-gray nuclei, plus the hidden efficacy bump near the first nucleus."""
    cfg.validate()
    geo = cfg.resolve()
    pts = _voxel_center_grid(cfg.dims)  # world == voxel for the phantom grid

    labels = np.zeros(pts.shape[:3], dtype=np.uint8)
    r_head = np.linalg.norm(pts - geo["center"], axis=-1)
    brain = r_head <= geo["brain_radius"]
    labels[brain] = WHITE_MATTER
    cortex = brain & (r_head > geo["brain_radius"] - geo["cortex_thickness"])
    labels[cortex] = CORTICAL_GM
    vent = (((pts - geo["center"]) / geo["ventricle_radii"]) ** 2).sum(axis=-1) <= 1.0
    labels[vent] = BACKGROUND_CSF
    for c in geo["nucleus_centers"]:
        nucleus = (((pts - c) / geo["nucleus_radii"]) ** 2).sum(axis=-1) <= 1.0
        labels[nucleus] = DEEP_GM

    rng = make_rng(seed if seed is not None else derive_seed(cfg.seed, TAG_TEMPLATE))
    means = np.array(cfg.class_means)[labels]
    sigmas = np.array(cfg.class_sigmas)[labels]
    intensity = means + sigmas * rng.standard_normal(labels.shape)

    bump = geo["nucleus_centers"][0] + np.array(cfg.bump_offset_mm)
    eff = EfficacyParams(
        tuple(float(v) for v in bump), cfg.sigma_eff_mm, cfg.p_max, cfg.p_floor
    )
    return Template(
        intensity=Volume(intensity.astype(np.float32), cfg.voxel_size_mm),
        labels=Volume(labels, cfg.voxel_size_mm),
        efficacy=eff,
        nucleus_centers=geo["nucleus_centers"],
    )


def displacement_field(
    dims, amplitude_mm: float, smoothness_mm: float, seed: int, voxel_size=(1.0, 1.0, 1.0)
) -> Volume:
    """Smooth random displacement field (3 channels, mm).

    A coarse lattice with cell size `smoothness_mm` is filled with values
    uniform in [-a, a] per component and upsampled trilinearly, so the
    per-component magnitude never exceeds a and the finite-difference
    gradient magnitude stays below 4a/s.
    """
    if amplitude_mm < 0:
        raise ConfigError("amplitude must be >= 0")
    if smoothness_mm <= 0:
        raise ConfigError("smoothness must be > 0")
    nx, ny, nz = dims
    if amplitude_mm == 0:
        return Volume(np.zeros((3, nz, ny, nx), dtype=np.float32), voxel_size)
    rng = make_rng(seed)
    # control lattice: one cell every `smoothness_mm`, covering the grid
    cdims = [int(np.floor((n - 1) / smoothness_mm)) + 2 for n in (nx, ny, nz)]
    coarse = rng.uniform(-amplitude_mm, amplitude_mm, size=(3, cdims[2], cdims[1], cdims[0]))
    out = np.empty((3, nz, ny, nx), dtype=np.float32)
    coords = _voxel_center_grid(dims) / smoothness_mm
    cvol = Volume(
        coarse.astype(np.float32),
        (1.0, 1.0, 1.0),
    )
    flat = coords.reshape(-1, 3)
    for ch in range(3):
        out[ch] = trilinear_sample(cvol, flat, channel=ch).reshape(nz, ny, nx).astype(
            np.float32
        )
    return Volume(out, voxel_size)


def apply_warp(vol: Volume, warp: Volume, interpolation: str = "trilinear") -> Volume:
    """Resample: output(v) = vol sampled at v + warp(v).

    Labels should use "nearest", intensities "trilinear"; out-of-grid
    samples fill with 0.
    """
    if warp.dims != vol.dims:
        raise ShapeError(f"warp dims {warp.dims} != volume dims {vol.dims}")
    if warp.channels != 3:
        raise ShapeError(f"warp must have 3 channels, got {warp.channels}")
    pts = _voxel_center_grid(vol.dims)
    world = voxel_to_world(vol, pts.reshape(-1, 3))
    disp = np.stack([warp.data[c].reshape(-1) for c in range(3)], axis=1)
    src = world + disp
    sampler = trilinear_sample if interpolation == "trilinear" else nearest_sample
    nx, ny, nz = vol.dims
    out = np.empty((vol.channels, nz, ny, nx), dtype=np.float64)
    for c in range(vol.channels):
        out[c] = sampler(vol, src, channel=c).reshape(nz, ny, nx)
    if vol.dtype_name == "uint8":
        data = np.rint(out).astype(np.uint8)
    else:
        data = out.astype(np.float32)
    return Volume(data, vol.voxel_size, np.array(vol.affine))


def pull_points_through_warp(
    warp: Volume, targets, tol: float = 1e-6, max_iter: int = 100
) -> np.ndarray:
    """Subject-space locations v solving v + w(v) = target (fixed point).

    Used to carry template-space landmarks (efficacy bump, nucleus center)
    into each subject.
    """
    targets = np.asarray(targets, dtype=np.float64)
    single = targets.ndim == 1
    t = targets.reshape(-1, 3)
    v = t.copy()
    for _ in range(max_iter):
        disp = np.stack([trilinear_sample(warp, v, channel=c) for c in range(3)], axis=1)
        nxt = t - disp
        if np.abs(nxt - v).max() < tol:
            v = nxt
            break
        v = nxt
    return v[0] if single else v


def true_efficacy(subject: Subject, p) -> np.ndarray:
    """Ground-truth probability of positive response at world point(s) p."""
    return subject.efficacy.probability(p)


def synth_subject(template: Template, cfg: PhantomConfig, subject_id: str, seed: int) -> Subject:
    """Deform the template, add bias + noise, and carry the efficacy bump along."""
    warp = displacement_field(
        cfg.dims, cfg.warp_amplitude_mm, cfg.warp_smoothness_mm, derive_seed(seed, TAG_WARP)
    )
    labels = apply_warp(template.labels, warp, "nearest")
    intensity = apply_warp(template.intensity, warp, "trilinear")

    data = intensity.data[0].astype(np.float32)
    if cfg.bias_amplitude > 0:
        bias_field = displacement_field(
            cfg.dims, 1.0, 2.0 * cfg.warp_smoothness_mm, derive_seed(seed, TAG_BIAS)
        )
        data = data * (1.0 + cfg.bias_amplitude * bias_field.data[0])
    if cfg.noise_sigma > 0:
        rng = make_rng(derive_seed(seed, TAG_NOISE))
        data = data + cfg.noise_sigma * rng.standard_normal(data.shape).astype(np.float32)
    intensity = Volume(data.astype(np.float32), cfg.voxel_size_mm)

    if cfg.warp_amplitude_mm > 0:
        bump = pull_points_through_warp(warp, np.array(template.efficacy.bump_center_mm))
        nucleus = pull_points_through_warp(warp, template.nucleus_centers[0])
    else:
        bump = np.array(template.efficacy.bump_center_mm)
        nucleus = template.nucleus_centers[0].copy()
    eff = EfficacyParams(
        tuple(float(v) for v in bump),
        template.efficacy.sigma_mm,
        template.efficacy.p_max,
        template.efficacy.p_floor,
    )
    return Subject(
        id=subject_id,
        intensity=intensity,
        labels=labels,
        true_warp=warp,
        efficacy=eff,
        nucleus_center_mm=np.asarray(nucleus, dtype=np.float64),
    )


def simulate_surgery(subject: Subject, cfg: PhantomConfig, seed: int) -> list[StimRecord]:
    """Stimulation records along jittered linear tracks through the nucleus.

    Per point, in fixed draw order: current, response Bernoulli(p*),
    improvement (uniform (50,100] on positive, [0,50] on null), pass
    effect.  Response probability optionally scales with current when
    `current_couples_response` is set.
    """
    rng = make_rng(seed)
    currents = np.array(cfg.currents_ma, dtype=np.float64)
    records = []
    half = (cfg.samples_per_track - 1) / 2.0
    for _t in range(cfg.tracks_per_subject):
        jitter = rng.uniform(-cfg.track_jitter_mm, cfg.track_jitter_mm, size=3)
        tilt = rng.uniform(-0.3, 0.3, size=2)
        direction = np.array([tilt[0], tilt[1], 1.0])
        direction /= np.linalg.norm(direction)
        track_center = subject.nucleus_center_mm + jitter
        for j in range(cfg.samples_per_track):
            pos = track_center + (j - half) * cfg.track_spacing_mm * direction
            current = float(currents[rng.integers(len(currents))])
            p = float(true_efficacy(subject, pos))
            if cfg.current_couples_response:
                p *= 0.5 + 0.5 * current / currents.max()
            positive = rng.random() < p
            u = rng.uniform(0.0, 50.0)
            improvement = 100.0 - u if positive else u
            pass_effect = rng.random() < cfg.pass_effect_prob
            records.append(
                StimRecord(
                    patient_id=subject.id,
                    x_mm=float(pos[0]),
                    y_mm=float(pos[1]),
                    z_mm=float(pos[2]),
                    current_ma=current,
                    improvement_pct=float(improvement),
                    pass_effect=bool(pass_effect),
                    side_effect="pass effect" if pass_effect else "",
                )
            )
    return records


def generate_cohort(cfg: PhantomConfig) -> Cohort:
    """The whole cohort as a pure function of (config, master seed)."""
    cfg.validate()
    template = build_template(cfg, seed=derive_seed(cfg.seed, TAG_TEMPLATE))
    subjects = []
    for i in range(cfg.subjects):
        sid = f"sub{i:03d}"
        subj = synth_subject(template, cfg, sid, derive_seed(cfg.seed, TAG_SUBJECT, i))
        subj.records = simulate_surgery(subj, cfg, derive_seed(cfg.seed, TAG_SURGERY, i))
        subjects.append(subj)
    return Cohort(config=cfg, template=template, subjects=subjects)


# ---------------------------------------------------------------------------
# cohort persistence
# ---------------------------------------------------------------------------

STIM_CSV_HEADER = [
    "patient_id",
    "x_mm",
    "y_mm",
    "z_mm",
    "current_ma",
    "improvement_pct",
    "pass_effect",
    "side_effect",
]


def write_stim_csv(records: list[StimRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(STIM_CSV_HEADER)
        for r in records:
            w.writerow(
                [
                    r.patient_id,
                    repr(r.x_mm),
                    repr(r.y_mm),
                    repr(r.z_mm),
                    repr(r.current_ma),
                    repr(r.improvement_pct),
                    int(r.pass_effect),
                    r.side_effect,
                ]
            )


def read_stim_csv(path) -> list[StimRecord]:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"missing stimulation file {path}")
    records = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != STIM_CSV_HEADER:
            raise DataError(f"{path}: unexpected stim.csv header {header}")
        for row in reader:
            if len(row) != len(STIM_CSV_HEADER):
                raise DataError(f"{path}: bad row {row}")
            rec = StimRecord(
                patient_id=row[0],
                x_mm=float(row[1]),
                y_mm=float(row[2]),
                z_mm=float(row[3]),
                current_ma=float(row[4]),
                improvement_pct=float(row[5]),
                pass_effect=bool(int(row[6])),
                side_effect=row[7],
            )
            rec.validate()
            records.append(rec)
    return records


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _efficacy_dict(e: EfficacyParams) -> dict:
    return {
        "bump_center_mm": list(e.bump_center_mm),
        "sigma_mm": e.sigma_mm,
        "p_max": e.p_max,
        "p_floor": e.p_floor,
    }


def _efficacy_from_dict(d: dict) -> EfficacyParams:
    return EfficacyParams(
        tuple(d["bump_center_mm"]), d["sigma_mm"], d["p_max"], d["p_floor"]
    )


def export_cohort(cohort: Cohort, out_dir) -> dict:
    """Write per-subject volumes + records, template volumes, and a manifest.

    Returns the manifest, whose content_hash digests every exported file
    plus the config echo, giving one reproducibility check per cohort.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tdir = out / "template"
    tdir.mkdir(exist_ok=True)
    write_mvol(cohort.template.intensity, tdir / "t1.mvol")
    write_mvol(cohort.template.labels, tdir / "labels.mvol")
    template_entry = {
        "efficacy": _efficacy_dict(cohort.template.efficacy),
        "nucleus_centers_mm": cohort.template.nucleus_centers.tolist(),
        "files": {
            "t1.mvol": _sha256(tdir / "t1.mvol"),
            "labels.mvol": _sha256(tdir / "labels.mvol"),
        },
    }
    subjects_entry = []
    for s in cohort.subjects:
        sdir = out / s.id
        sdir.mkdir(exist_ok=True)
        write_mvol(s.intensity, sdir / "t1.mvol")
        write_mvol(s.labels, sdir / "labels.mvol")
        write_mvol(s.true_warp, sdir / "truewarp.mvol")
        write_stim_csv(s.records, sdir / "stim.csv")
        subjects_entry.append(
            {
                "id": s.id,
                "efficacy": _efficacy_dict(s.efficacy),
                "nucleus_center_mm": s.nucleus_center_mm.tolist(),
                "n_records": len(s.records),
                "files": {
                    name: _sha256(sdir / name)
                    for name in ("t1.mvol", "labels.mvol", "truewarp.mvol", "stim.csv")
                },
            }
        )
    body = {
        "format": "cohort-v1",
        "config": cohort.config.to_dict(),
        "template": template_entry,
        "subjects": subjects_entry,
    }
    content_hash = hashlib.sha256(
        json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    manifest = dict(body, content_hash=content_hash)
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest


def read_manifest(cohort_dir) -> dict:
    path = Path(cohort_dir) / "manifest.json"
    if not path.exists():
        raise MissingFileError(f"missing cohort manifest {path}")
    try:
        with open(path, encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: corrupt manifest: {e}") from e
    if manifest.get("format") != "cohort-v1":
        raise DataError(f"{path}: not a cohort manifest")
    return manifest


def import_cohort(cohort_dir, load_volumes: bool = True) -> Cohort:
    """Rebuild a cohort from an exported directory.

    With load_volumes=False only records and ground-truth parameters are
    loaded (enough for scoring and fold planning).
    """
    root = Path(cohort_dir)
    manifest = read_manifest(root)
    cfg = PhantomConfig.from_dict(manifest["config"])
    tdir = root / "template"
    for name in ("t1.mvol", "labels.mvol"):
        if not (tdir / name).exists():
            raise MissingFileError(f"missing template file {tdir / name}")
    template = Template(
        intensity=read_mvol(tdir / "t1.mvol") if load_volumes else None,
        labels=read_mvol(tdir / "labels.mvol") if load_volumes else None,
        efficacy=_efficacy_from_dict(manifest["template"]["efficacy"]),
        nucleus_centers=np.array(manifest["template"]["nucleus_centers_mm"]),
    )
    subjects = []
    for entry in manifest["subjects"]:
        sdir = root / entry["id"]
        for name in ("t1.mvol", "labels.mvol", "truewarp.mvol", "stim.csv"):
            if not (sdir / name).exists():
                raise MissingFileError(f"missing subject file {sdir / name}")
        subjects.append(
            Subject(
                id=entry["id"],
                intensity=read_mvol(sdir / "t1.mvol") if load_volumes else None,
                labels=read_mvol(sdir / "labels.mvol") if load_volumes else None,
                true_warp=read_mvol(sdir / "truewarp.mvol") if load_volumes else None,
                efficacy=_efficacy_from_dict(entry["efficacy"]),
                nucleus_center_mm=np.array(entry["nucleus_center_mm"]),
                records=read_stim_csv(sdir / "stim.csv"),
            )
        )
    return Cohort(config=cfg, template=template, subjects=subjects)
