"""Seeded synthetic park scenes: labeled spectral point clouds plus ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .fusion import CameraIntrinsics, RigidTransform, SpectralCube, nearest_pixels, project_points
from .mapping import MassDensityGrid
from .semantics import LABELS, NOT_PLANTS_DENSITY, PLANTS_DENSITY, PLANTS_LABELS
from .spectral import DEFAULT_WAVELENGTHS_NM, REFLECTANCE_CEILING, ReferenceProfile, ReflectanceSpectrum, SpectralCalibration
from .traversal import PathCandidate

SHAPES = ("box", "disk", "heightfield")


def _red_edge(wl, green, red, nir, edge_nm, edge_width):
    bump = (green - red) * np.exp(-(((wl - 550.0) / 45.0) ** 2))
    rise = (nir - red) / (1.0 + np.exp(-(wl - edge_nm) / edge_width))
    return red + bump + rise


def _flat(wl, level, tilt):
    # tilt = relative change across 690 +/- 140 nm
    return level * (1.0 + tilt * (wl - 690.0) / 140.0)


def profile_values(label: str, wavelengths_nm=DEFAULT_WAVELENGTHS_NM) -> np.ndarray:
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    if label == "Vegetation":
        return _red_edge(wl, 0.12, 0.04, 0.48, 715.0, 12.0)
    if label == "Grass":
        return _red_edge(wl, 0.14, 0.07, 0.38, 710.0, 14.0)
    if label == "Pedestrian":
        # dyed textile: dark in the visible, moderate NIR plateau
        return 0.08 + 0.14 / (1.0 + np.exp(-(wl - 700.0) / 30.0))
    if label == "Track":
        return _flat(wl, 0.24, 0.08)
    if label == "Building":
        return _flat(wl, 0.32, 0.02)
    if label == "Obstacle":
        return _flat(wl, 0.12, -0.05)
    if label == "Other":
        return _flat(wl, 0.18, 0.04)
    raise ValueError(f"no profile for label {label!r}")


def reference_profiles(wavelengths_nm=DEFAULT_WAVELENGTHS_NM) -> list:
    """One parametric reflectance profile per semantic class.

    Plants classes carry a red edge (810 nm at least 3x the 650 nm value);
    mineral classes are flat within 10% of their mean.
    """
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    return [ReferenceProfile(lbl, ReflectanceSpectrum(wl, profile_values(lbl, wl))) for lbl in LABELS]


@dataclass(frozen=True)
class Primitive:
    """Scene element.

    ``params`` is ``(x0, y0, x1, y1)`` for box and heightfield, ``(cx, cy, r)``
    for disk. ``point_density`` is points per m² of footprint. A ``surface``
    primitive adds no points; it relabels the ground inside its footprint.
    """
    shape: str
    label: str
    params: tuple
    point_density: float = 100.0
    height_range: tuple = (0.0, 1.0)
    surface: bool = False

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        if self.label not in LABELS:
            raise ValueError(f"label {self.label!r} not in {LABELS}")
        want = 3 if self.shape == "disk" else 4
        if len(self.params) != want:
            raise ValueError(f"{self.shape} needs {want} parameters")
        if self.point_density < 0:
            raise ValueError("point density must be >= 0")
        lo, hi = self.height_range
        if hi < lo:
            raise ValueError("height range must be ordered")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "height_range", (float(lo), float(hi)))

    @property
    def area(self) -> float:
        if self.shape == "disk":
            return float(np.pi * self.params[2] ** 2)
        x0, y0, x1, y1 = self.params
        return max(0.0, x1 - x0) * max(0.0, y1 - y0)

    def contains(self, x, y):
        if self.shape == "disk":
            cx, cy, r = self.params
            return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 <= r * r
        x0, y0, x1, y1 = self.params
        x, y = np.asarray(x), np.asarray(y)
        return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        n = int(round(self.point_density * self.area))
        if self.shape == "disk":
            cx, cy, r = self.params
            rad = r * np.sqrt(rng.random(n))
            ang = 2 * np.pi * rng.random(n)
            x, y = cx + rad * np.cos(ang), cy + rad * np.sin(ang)
        else:
            x0, y0, x1, y1 = self.params
            x, y = x0 + (x1 - x0) * rng.random(n), y0 + (y1 - y0) * rng.random(n)
        lo, hi = self.height_range
        if self.shape == "heightfield":
            field_ = 0.5 * (1 + np.sin(1.3 * x) * np.cos(0.9 * y))
            z = lo + (hi - lo) * field_
        else:
            z = lo + (hi - lo) * rng.random(n)
        return np.stack([x, y, z], axis=1)


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    extents: tuple = (20.0, 20.0)
    primitives: tuple = ()
    wavelengths_nm: tuple = tuple(DEFAULT_WAVELENGTHS_NM)
    noise_sigma: float = 0.0
    brightness: tuple = (1.0, 1.0)
    ground_label: str = "Grass"
    ground_density: float = 50.0
    ground_noise: float = 0.0
    unobserved: tuple = ()
    cell_size: float = 0.5
    ugv_height: float = 1.0
    ground_threshold: float = 0.05
    robot_mass: float = 250.0
    plants_density: float = PLANTS_DENSITY
    not_plants_density: float = NOT_PLANTS_DENSITY
    candidates: tuple = ()
    robot_width: float = 0.6

    def __post_init__(self):
        ex, ey = self.extents
        if not (ex > 0 and ey > 0):
            raise ValueError("scene extents must be positive")
        if self.noise_sigma < 0 or self.ground_noise < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.ground_label not in LABELS:
            raise ValueError(f"ground label {self.ground_label!r} not in {LABELS}")
        lo, hi = self.brightness
        if not 0 < lo <= hi:
            raise ValueError("brightness range must satisfy 0 < lo <= hi")
        prims = tuple(p if isinstance(p, Primitive) else Primitive(**p) for p in self.primitives)
        object.__setattr__(self, "primitives", prims)
        object.__setattr__(self, "unobserved", tuple(tuple(map(float, b)) for b in self.unobserved))
        cands = tuple(c if isinstance(c, PathCandidate) else PathCandidate(**c) for c in self.candidates)
        object.__setattr__(self, "candidates", cands)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        for key in ("extents", "wavelengths_nm", "brightness"):
            if key in d:
                d[key] = tuple(d[key])
        d["primitives"] = tuple(
            Primitive(**{**p, "params": tuple(p["params"]), "height_range": tuple(p.get("height_range", (0.0, 1.0)))})
            for p in d.get("primitives", ())
        )
        d["candidates"] = tuple(
            PathCandidate(str(c["id"]), tuple(map(tuple, c["waypoints"])), float(c["width"]))
            for c in d.get("candidates", ())
        )
        d["unobserved"] = tuple(tuple(b) for b in d.get("unobserved", ()))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "extents": list(self.extents),
            "primitives": [
                {"shape": p.shape, "label": p.label, "params": list(p.params), "point_density": p.point_density,
                 "height_range": list(p.height_range), "surface": p.surface}
                for p in self.primitives
            ],
            "wavelengths_nm": list(self.wavelengths_nm),
            "noise_sigma": self.noise_sigma,
            "brightness": list(self.brightness),
            "ground_label": self.ground_label,
            "ground_density": self.ground_density,
            "ground_noise": self.ground_noise,
            "unobserved": [list(b) for b in self.unobserved],
            "cell_size": self.cell_size,
            "ugv_height": self.ugv_height,
            "ground_threshold": self.ground_threshold,
            "robot_mass": self.robot_mass,
            "plants_density": self.plants_density,
            "not_plants_density": self.not_plants_density,
            "candidates": [{"id": c.id, "waypoints": [list(w) for w in c.waypoints], "width": c.width}
                           for c in self.candidates],
            "robot_width": self.robot_width,
        }


@dataclass
class Scene:
    positions: np.ndarray
    labels: np.ndarray
    reflectance: np.ndarray
    wavelengths_nm: np.ndarray
    ground_truth_grid: MassDensityGrid
    plants_mask: np.ndarray
    spec: SceneSpec

    def __len__(self) -> int:
        return len(self.positions)


def _in_unobserved(spec: SceneSpec, x, y):
    hidden = np.zeros(np.shape(x), dtype=bool)
    for x0, y0, x1, y1 in spec.unobserved:
        hidden |= (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
    return hidden


def class_density(spec: SceneSpec, label: str) -> float:
    return spec.plants_density if label in PLANTS_LABELS else spec.not_plants_density


def ground_truth_grid(spec: SceneSpec) -> MassDensityGrid:
    """Per-cell maximum class density of obstacles, judged at cell centres.

    Obstacles are non-surface primitives whose height range reaches into the
    band above the ground threshold and at most ``ugv_height``. Hidden cells
    keep the unknown density (``robot_mass``).
    """
    ex, ey = spec.extents
    cs = spec.cell_size
    width, height = int(np.ceil(ex / cs - 1e-9)), int(np.ceil(ey / cs - 1e-9))
    grid = MassDensityGrid.unknown((0.0, 0.0), width, height, cs, spec.robot_mass)
    iy, ix = np.mgrid[0:height, 0:width]
    cx, cy = grid.cell_center(ix, iy)
    hidden = _in_unobserved(spec, cx, cy)
    grid.observed[:] = ~hidden
    grid.values[~hidden] = 0.0
    for prim in spec.primitives:
        lo, hi = prim.height_range
        if prim.surface or hi <= spec.ground_threshold or lo > spec.ugv_height:
            continue
        covered = prim.contains(cx, cy) & ~hidden
        grid.values[covered] = np.maximum(grid.values[covered], class_density(spec, prim.label))
    return grid


def generate_scene(spec: SceneSpec) -> Scene:
    """Sample labeled points with class spectra, brightness, and seeded noise.

    Each primitive and the ground draw from their own generator seeded with
    ``(seed, k)``, so outputs are bit-identical for a given spec.
    """
    ex, ey = spec.extents
    wl = np.asarray(spec.wavelengths_nm, dtype=np.float64)
    profiles = {lbl: profile_values(lbl, wl) for lbl in LABELS}

    rng = np.random.default_rng([spec.seed, 0])
    n_ground = int(round(spec.ground_density * ex * ey))
    gx, gy = ex * rng.random(n_ground), ey * rng.random(n_ground)
    gz = rng.normal(0.0, spec.ground_noise, n_ground) if spec.ground_noise > 0 else np.zeros(n_ground)
    glabels = np.full(n_ground, spec.ground_label, dtype=object)
    for prim in spec.primitives:
        if prim.surface:
            glabels[prim.contains(gx, gy)] = prim.label
    chunks = [np.stack([gx, gy, gz], axis=1)]
    label_chunks = [glabels]
    for k, prim in enumerate(spec.primitives, start=1):
        if prim.surface:
            continue
        pts = prim.sample(np.random.default_rng([spec.seed, k]))
        chunks.append(pts)
        label_chunks.append(np.full(len(pts), prim.label, dtype=object))

    positions = np.concatenate(chunks)
    labels = np.concatenate(label_chunks).astype(str)
    keep = ~_in_unobserved(spec, positions[:, 0], positions[:, 1])
    positions, labels = positions[keep], labels[keep]

    refl = np.empty((len(positions), wl.size))
    for lbl in LABELS:
        sel = labels == lbl
        refl[sel] = profiles[lbl]
    srng = np.random.default_rng([spec.seed, len(spec.primitives) + 1])
    lo, hi = spec.brightness
    if hi > lo:
        refl *= srng.uniform(lo, hi, size=(len(positions), 1))
    elif lo != 1.0:
        refl *= lo
    if spec.noise_sigma > 0:
        refl = refl + srng.normal(0.0, spec.noise_sigma, size=refl.shape)
    refl = np.clip(refl, 0.0, REFLECTANCE_CEILING)

    return Scene(
        positions=positions,
        labels=labels,
        reflectance=refl,
        wavelengths_nm=wl,
        ground_truth_grid=ground_truth_grid(spec),
        plants_mask=np.isin(labels, list(PLANTS_LABELS)),
        spec=spec,
    )


def park_scene_spec(seed: int = 7, noise_sigma: float = 0.02) -> SceneSpec:
    """40 m x 30 m park: lawn, a track, trees, bushes, tall grass, a shack, people, clutter.

    Yields a little over 10^5 points.
    """
    prims = [
        Primitive("box", "Track", (0.0, 12.0, 40.0, 15.0), surface=True),
        Primitive("box", "Track", (18.0, 0.0, 21.0, 12.0), surface=True),
        Primitive("heightfield", "Grass", (4.0, 18.0, 16.0, 28.0), 120.0, (0.1, 0.6)),
        Primitive("box", "Building", (28.0, 19.0, 34.0, 25.0), 250.0, (0.0, 3.0)),
        Primitive("box", "Obstacle", (22.0, 16.0, 24.0, 16.6), 400.0, (0.0, 0.8)),
        Primitive("box", "Obstacle", (10.0, 15.5, 10.6, 16.1), 400.0, (0.0, 1.0)),
        Primitive("box", "Other", (36.0, 2.0, 38.0, 6.0), 200.0, (0.0, 0.5)),
        Primitive("disk", "Pedestrian", (12.0, 13.5, 0.3), 1500.0, (0.0, 1.8)),
        Primitive("disk", "Pedestrian", (25.0, 10.0, 0.3), 1500.0, (0.0, 1.8)),
    ]
    for cx, cy, r in ((5.0, 5.0, 2.0), (9.0, 7.0, 1.8), (30.0, 6.0, 2.5), (35.0, 27.0, 2.0), (24.0, 26.0, 2.2)):
        prims.append(Primitive("disk", "Vegetation", (cx, cy, r), 180.0, (0.3, 4.0)))
    for cx, cy in ((14.0, 4.0), (26.0, 4.0), (20.0, 22.0), (3.0, 27.0)):
        prims.append(Primitive("disk", "Vegetation", (cx, cy, 0.8), 300.0, (0.05, 1.2)))
    return SceneSpec(
        seed=seed,
        extents=(40.0, 30.0),
        primitives=tuple(prims),
        noise_sigma=noise_sigma,
        brightness=(0.6, 1.2),
        ground_label="Grass",
        ground_density=60.0,
        ground_noise=0.005,
    )


def golden_park_spec(seed: int = 11, noise_sigma: float = 0.02) -> SceneSpec:
    """Three-way choice from (2, 6): through a tree grove, into an unmapped patch, or over lawn."""
    prims = [
        Primitive("box", "Track", (0.0, 5.0, 3.0, 7.0), surface=True),
        Primitive("disk", "Vegetation", (6.5, 8.2, 1.0), 250.0, (0.2, 3.5)),
        Primitive("disk", "Vegetation", (8.0, 9.3, 1.1), 250.0, (0.2, 3.5)),
        Primitive("disk", "Vegetation", (9.6, 10.4, 1.0), 250.0, (0.2, 3.5)),
        Primitive("box", "Building", (12.0, 9.0, 15.0, 11.5), 200.0, (0.0, 3.0)),
    ]
    candidates = (
        PathCandidate("p1", ((2.0, 6.0), (5.0, 7.0), (8.5, 7.6)), 0.6),
        PathCandidate("p4", ((2.0, 6.0), (6.0, 6.0), (9.5, 6.0)), 0.6),
        PathCandidate("p7", ((2.0, 6.0), (5.0, 5.0), (7.3, 3.6)), 0.6),
    )
    return SceneSpec(
        seed=seed,
        extents=(16.0, 12.0),
        primitives=tuple(prims),
        noise_sigma=noise_sigma,
        brightness=(0.7, 1.1),
        ground_label="Grass",
        ground_density=80.0,
        ground_noise=0.005,
        unobserved=((7.0, 0.0, 16.0, 3.5),),
        candidates=candidates,
    )


@dataclass
class NadirView:
    """A virtual downward camera over the scene and the sensor rig around it."""
    cube: SpectralCube
    intrinsics: CameraIntrinsics
    lidar_to_camera: RigidTransform
    lidar_pose: RigidTransform
    calibration: SpectralCalibration
    owner: np.ndarray  # (height, width) index of the point filling each pixel, -1 if none


def render_nadir_view(scene: Scene, pixel_size: float = 0.05, camera_height: float = 30.0,
                      lidar_height: float = 1.5) -> NadirView:
    """Render the scene's spectra into a multispectral cube seen from above.

    The LiDAR sits at the scene centre, ``lidar_height`` above ground, axis
    aligned with the world. The cube stores raw intensities
    ``i = r * gain`` so fusion has to apply ``M = diag(1 / gain)``. Each
    pixel takes the point nearest the camera (lowest index on ties).
    """
    ex, ey = scene.spec.extents
    width, height = int(np.ceil(ex / pixel_size)), int(np.ceil(ey / pixel_size))
    f = camera_height / pixel_size
    intr = CameraIntrinsics(f, f, width / 2.0 - 0.5, height / 2.0 - 0.5, width, height)
    center = np.array([ex / 2.0, ey / 2.0, camera_height])
    rot = np.diag([1.0, -1.0, -1.0])
    world_to_cam = RigidTransform(rot, -rot @ center)
    lidar_pose = RigidTransform(np.eye(3), np.array([ex / 2.0, ey / 2.0, lidar_height]))
    lidar_to_cam = world_to_cam.compose(lidar_pose)

    wl = scene.wavelengths_nm
    gain = np.linspace(0.8, 1.25, wl.size)
    cal = SpectralCalibration(np.diag(1.0 / gain), wl)

    lidar_pts = lidar_pose.inverse().apply(scene.positions)
    uv, inside = project_points(intr, lidar_to_cam, lidar_pts)
    idx = np.flatnonzero(inside)
    px = nearest_pixels(uv[idx])
    depth = lidar_to_cam.apply(lidar_pts[idx])[:, 2]
    flat = px[:, 1] * width + px[:, 0]
    order = np.lexsort((idx, depth, flat))
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat[order][1:] != flat[order][:-1]
    winners = order[first]
    owner = np.full(width * height, -1, dtype=np.int64)
    owner[flat[winners]] = idx[winners]
    owner = owner.reshape(height, width)

    data = np.zeros((height, width, wl.size), dtype=np.float32)
    filled = owner >= 0
    data[filled] = (scene.reflectance[owner[filled]] * gain).astype(np.float32)
    return NadirView(SpectralCube(wl, data), intr, lidar_to_cam, lidar_pose, cal, owner)
