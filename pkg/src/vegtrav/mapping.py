"""World-frame voxel map, RANSAC ground plane and the 2D mass-density grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fusion import AugmentedCloud, RigidTransform
from .spectral import NDArrayF

DEFAULT_VOXEL_SIZE = 0.2
DEFAULT_CELL_SIZE = 0.5
DEFAULT_GROUND_THRESHOLD = 0.05


@dataclass(frozen=True)
class Pose:
    """Sensor-to-world transform at a timestamp (poses come from an external SLAM)."""
    transform: RigidTransform
    timestamp: float = 0.0


@dataclass(frozen=True)
class GroundPlane:
    """Plane ``normal . p = offset`` with a unit normal pointing up."""
    normal: NDArrayF
    offset: float
    inlier_threshold: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier threshold must be positive")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points) -> NDArrayF:
        return np.asarray(points, dtype=np.float64).reshape(-1, 3) @ self.normal - self.offset

    @classmethod
    def horizontal(cls, height: float = 0.0, threshold: float = DEFAULT_GROUND_THRESHOLD) -> "GroundPlane":
        return cls(np.array([0.0, 0.0, 1.0]), height, threshold)


def _orient_up(normal: NDArrayF) -> NDArrayF:
    for c in (2, 1, 0):
        if normal[c] != 0:
            return normal if normal[c] > 0 else -normal
    return normal


def _fit_plane_lsq(points: NDArrayF):
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    normal = vt[-1] / np.linalg.norm(vt[-1])
    normal = _orient_up(normal)
    return normal, float(normal @ centroid)


def ransac_ground_plane(points, threshold: float = DEFAULT_GROUND_THRESHOLD, iterations: int = 100, seed: int = 0) -> GroundPlane:
    """Fit the dominant plane by RANSAC then refine on its inliers by least squares.

    Each iteration draws three distinct points with a seeded generator; the
    hypothesis with the most inliers (first one on ties) wins.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise ValueError(f"RANSAC needs at least 3 points, got {len(pts)}")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1.0):
        raise ValueError("points are collinear; plane undefined")

    rng = np.random.default_rng(seed)
    best_count, best_mask = -1, None
    for _ in range(iterations):
        a, b, c = pts[rng.choice(len(pts), size=3, replace=False)]
        normal = np.cross(b - a, c - a)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        mask = np.abs((pts - a) @ normal) <= threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
    if best_mask is None:
        raise ValueError("every RANSAC sample was degenerate")

    normal, offset = _fit_plane_lsq(pts[best_mask])
    return GroundPlane(normal, offset, threshold)


class VoxelMap:
    """Sparse voxel map keyed by integer ``(i, j, k) = floor(p / voxel_size)``.

    Each voxel keeps its point count, position and spectrum sums (for means),
    the Plants-probability mean and the maximum mass density seen.
    """

    def __init__(self, voxel_size: float = DEFAULT_VOXEL_SIZE):
        if not voxel_size > 0:
            raise ValueError("voxel size must be positive")
        self.voxel_size = float(voxel_size)
        self.wavelengths_nm: Optional[NDArrayF] = None
        self.cells: dict = {}

    def __len__(self) -> int:
        return len(self.cells)

    def voxel_index(self, points) -> np.ndarray:
        return np.floor(np.asarray(points, dtype=np.float64) / self.voxel_size).astype(np.int64)

    def insert(self, cloud: AugmentedCloud, pose: Optional[Pose] = None) -> "VoxelMap":
        if len(cloud) == 0:
            return self
        if not np.all(np.isfinite(cloud.positions)):
            raise ValueError("cloud positions must be finite")
        world = cloud.positions if pose is None else pose.transform.apply(cloud.positions)
        nb = cloud.wavelengths_nm.size
        if self.wavelengths_nm is None and nb:
            self.wavelengths_nm = cloud.wavelengths_nm.copy()
        elif nb and (self.wavelengths_nm.size != nb or not np.allclose(self.wavelengths_nm, cloud.wavelengths_nm)):
            raise ValueError("cloud band grid differs from the map's")

        keys, inverse = np.unique(self.voxel_index(world), axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        m = len(keys)
        count = np.bincount(inverse, minlength=m)
        pos_sum = np.stack([np.bincount(inverse, world[:, c], m) for c in range(3)], axis=1)

        has_refl = cloud.has_reflectance
        refl_count = np.bincount(inverse, has_refl, m)
        refl = np.where(has_refl[:, None], cloud.reflectance, 0.0)
        refl_sum = np.stack([np.bincount(inverse, refl[:, c], m) for c in range(nb)], axis=1) if nb else np.zeros((m, 0))

        has_p = ~np.isnan(cloud.plants_probability)
        p_count = np.bincount(inverse, has_p, m)
        p_sum = np.bincount(inverse, np.where(has_p, cloud.plants_probability, 0.0), m)

        dens = np.full(m, -np.inf)
        has_d = ~np.isnan(cloud.mass_density)
        np.maximum.at(dens, inverse[has_d], cloud.mass_density[has_d])

        for r in range(m):
            key = (int(keys[r, 0]), int(keys[r, 1]), int(keys[r, 2]))
            v = self.cells.get(key)
            d = float(dens[r]) if np.isfinite(dens[r]) else None
            if v is None:
                self.cells[key] = _Voxel(int(count[r]), pos_sum[r].copy(), int(refl_count[r]),
                                         refl_sum[r].copy(), int(p_count[r]), float(p_sum[r]), d)
            else:
                v.count += int(count[r])
                v.pos_sum += pos_sum[r]
                v.refl_count += int(refl_count[r])
                if v.refl_sum.size == 0:
                    v.refl_sum = refl_sum[r].copy()
                else:
                    v.refl_sum += refl_sum[r]
                v.prob_count += int(p_count[r])
                v.prob_sum += float(p_sum[r])
                if d is not None:
                    v.max_density = d if v.max_density is None else max(v.max_density, d)
        return self

    def arrays(self) -> dict:
        """Voxel aggregates as arrays sorted by key (NaN marks absent means/densities)."""
        keys = sorted(self.cells)
        m = len(keys)
        nb = 0 if self.wavelengths_nm is None else self.wavelengths_nm.size
        out = {
            "keys": np.array(keys, dtype=np.int64).reshape(m, 3),
            "count": np.zeros(m, dtype=np.int64),
            "centroid": np.zeros((m, 3)),
            "mean_reflectance": np.full((m, nb), np.nan),
            "mean_plants_probability": np.full(m, np.nan),
            "max_density": np.full(m, np.nan),
        }
        for r, key in enumerate(keys):
            v = self.cells[key]
            out["count"][r] = v.count
            out["centroid"][r] = v.pos_sum / v.count
            if v.refl_count:
                out["mean_reflectance"][r] = v.refl_sum / v.refl_count
            if v.prob_count:
                out["mean_plants_probability"][r] = v.prob_sum / v.prob_count
            if v.max_density is not None:
                out["max_density"][r] = v.max_density
        return out

    def points(self) -> NDArrayF:
        """Voxel centroids, one per stored voxel."""
        return self.arrays()["centroid"]


@dataclass
class _Voxel:
    count: int
    pos_sum: NDArrayF
    refl_count: int
    refl_sum: NDArrayF
    prob_count: int
    prob_sum: float
    max_density: Optional[float]


def insert_cloud(voxel_map: VoxelMap, cloud: AugmentedCloud, pose: Optional[Pose] = None) -> VoxelMap:
    """Transform ``cloud`` to the world frame and merge it into ``voxel_map`` (in place)."""
    return voxel_map.insert(cloud, pose)


@dataclass
class MassDensityGrid:
    """Row-major (height, width) grid of areal mass density in kg/m².

    Cell ``(ix, iy)`` spans ``origin + [ix, ix+1) * cell_size`` in x and the
    same in y; ``values[iy, ix]``. Unobserved cells hold ``init_density``.
    """
    cell_size: float
    origin: tuple
    values: NDArrayF
    observed: np.ndarray
    init_density: float

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell size must be positive")
        self.values = np.asarray(self.values, dtype=np.float64)
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.observed.shape:
            raise ValueError("values and observed mask must be matching 2-D arrays")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("densities must be finite and >= 0")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size

    @classmethod
    def unknown(cls, origin, width: int, height: int, cell_size: float, init_density: float) -> "MassDensityGrid":
        return cls(cell_size, tuple(origin), np.full((height, width), float(init_density)),
                   np.zeros((height, width), bool), float(init_density))

    def cell_of(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        return np.floor((xy - np.asarray(self.origin)) / self.cell_size).astype(np.int64)

    def cell_center(self, ix, iy):
        return (self.origin[0] + (np.asarray(ix) + 0.5) * self.cell_size,
                self.origin[1] + (np.asarray(iy) + 0.5) * self.cell_size)

    def contains(self, ix, iy):
        ix, iy = np.asarray(ix), np.asarray(iy)
        return (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)

    def density_at(self, ix, iy):
        """Density of cells by index; cells outside the grid read as unknown."""
        ix = np.asarray(ix, dtype=np.int64)
        iy = np.asarray(iy, dtype=np.int64)
        inside = self.contains(ix, iy)
        out = np.full(np.broadcast(ix, iy).shape, self.init_density)
        out[inside] = self.values[iy[inside], ix[inside]]
        return out


def grid_frame_for(xy, cell_size: float):
    """Cell-aligned origin and (width, height) covering the XY points."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    lo = np.floor(xy.min(axis=0) / cell_size)
    hi = np.floor(xy.max(axis=0) / cell_size)
    width, height = (hi - lo + 1).astype(int)
    return (float(lo[0] * cell_size), float(lo[1] * cell_size)), int(width), int(height)


def flatten_to_grid(
    voxel_map: VoxelMap,
    ground: GroundPlane,
    ugv_height: float,
    robot_mass: float,
    cell_size: float = DEFAULT_CELL_SIZE,
    bounds: Optional[Sequence[float]] = None,
    init_density: Optional[float] = None,
) -> MassDensityGrid:
    """Project the voxel map onto a 2D mass-density grid.

    Voxels whose centroid is within the ground threshold of ``ground`` or
    more than ``ugv_height`` above it are dropped; each column then takes the
    maximum surviving density. A column with voxels but no surviving ones is
    free space (0). Columns without any voxel keep the initialization
    density, ``robot_mass`` kg/m² unless ``init_density`` is given. Surviving
    voxels that never received a density (no spectrum) count as unknown.

    ``bounds = (xmin, ymin, xmax, ymax)`` fixes the grid extent; otherwise
    the grid covers the voxel centroids' XY bounding box.
    """
    if not ugv_height > 0:
        raise ValueError("ugv_height must be positive")
    if not cell_size > 0:
        raise ValueError("cell_size must be positive")
    if not robot_mass > 0:
        raise ValueError("robot_mass must be positive")
    init = float(robot_mass if init_density is None else init_density)

    arr = voxel_map.arrays()
    centroids = arr["centroid"]
    if bounds is not None:
        xmin, ymin, xmax, ymax = map(float, bounds)
        origin = (xmin, ymin)
        width = max(1, int(np.ceil((xmax - xmin) / cell_size - 1e-9)))
        height = max(1, int(np.ceil((ymax - ymin) / cell_size - 1e-9)))
    elif len(centroids):
        origin, width, height = grid_frame_for(centroids[:, :2], cell_size)
    else:
        return MassDensityGrid.unknown((0.0, 0.0), 1, 1, cell_size, init)

    grid = MassDensityGrid.unknown(origin, width, height, cell_size, init)
    if not len(centroids):
        return grid

    cells = grid.cell_of(centroids[:, :2])
    inside = grid.contains(cells[:, 0], cells[:, 1])
    ix, iy = cells[inside, 0], cells[inside, 1]
    grid.observed[iy, ix] = True
    grid.values[grid.observed] = 0.0

    dist = ground.signed_distance(centroids[inside])
    keep = (np.abs(dist) > ground.inlier_threshold) & (dist <= ugv_height)
    dens = arr["max_density"][inside]
    dens = np.where(np.isnan(dens), init, dens)
    np.maximum.at(grid.values, (iy[keep], ix[keep]), dens[keep])
    return grid
