"""LiDAR-to-camera projection and spectral augmentation of point clouds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .spectral import NDArrayF, REFLECTANCE_CEILING, ReflectanceSpectrum, SpectralCalibration, calibrate_array

NEAR_PLANE_M = 0.05


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus Brown-Conrady distortion ``(k1, k2, p1, p2, k3)``.

    Shorter distortion lists are zero-padded; an empty list is a pure pinhole.
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    distortion: tuple = ()

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if len(self.distortion) > 5:
            raise ValueError("at most 5 distortion coefficients (k1, k2, p1, p2, k3)")
        object.__setattr__(self, "distortion", tuple(float(d) for d in self.distortion))

    @property
    def matrix(self) -> NDArrayF:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def coefficients(self) -> NDArrayF:
        return np.pad(np.asarray(self.distortion, dtype=np.float64), (0, 5 - len(self.distortion)))


@dataclass(frozen=True)
class RigidTransform:
    rotation: NDArrayF
    translation: NDArrayF

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat) -> "RigidTransform":
        m = np.asarray(mat, dtype=np.float64).reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> NDArrayF:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> NDArrayF:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


@dataclass(frozen=True)
class LidarPoint:
    x: float
    y: float
    z: float
    intensity: Optional[float] = None

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError("LiDAR coordinates must be finite")


@dataclass(frozen=True)
class AugmentedPoint:
    position: NDArrayF
    reflectance: Optional[ReflectanceSpectrum] = None
    plants_probability: Optional[float] = None
    mass_density: Optional[float] = None
    frame: str = "sensor"

    def __post_init__(self):
        if self.reflectance is None and self.plants_probability is not None:
            raise ValueError("plants probability requires a reflectance")
        if self.mass_density is not None and self.mass_density < 0:
            raise ValueError("mass density must be >= 0")


@dataclass
class AugmentedCloud:
    """Column-oriented augmented point cloud.

    Absent payloads are NaN: a row of ``reflectance`` is NaN when the point
    fell outside the camera frustum.
    """
    positions: NDArrayF
    wavelengths_nm: NDArrayF
    reflectance: NDArrayF
    plants_probability: NDArrayF = None
    mass_density: NDArrayF = None
    frame: str = "sensor"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64).reshape(-1)
        self.reflectance = np.asarray(self.reflectance, dtype=np.float64).reshape(n, self.wavelengths_nm.size)
        if self.plants_probability is None:
            self.plants_probability = np.full(n, np.nan)
        if self.mass_density is None:
            self.mass_density = np.full(n, np.nan)
        self.plants_probability = np.asarray(self.plants_probability, dtype=np.float64).reshape(n)
        self.mass_density = np.asarray(self.mass_density, dtype=np.float64).reshape(n)
        if np.any(self.mass_density < 0):
            raise ValueError("mass density must be >= 0")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def has_reflectance(self):
        return ~np.isnan(self.reflectance).any(axis=1) if self.wavelengths_nm.size else np.zeros(len(self), bool)

    def __getitem__(self, i: int) -> AugmentedPoint:
        refl = None
        if self.has_reflectance[i]:
            refl = ReflectanceSpectrum(self.wavelengths_nm, self.reflectance[i])
        p = self.plants_probability[i]
        d = self.mass_density[i]
        return AugmentedPoint(
            self.positions[i].copy(),
            refl,
            None if np.isnan(p) else float(p),
            None if np.isnan(d) else float(d),
            self.frame,
        )

    def __iter__(self) -> Iterator[AugmentedPoint]:
        for i in range(len(self)):
            yield self[i]

    def transformed(self, transform: RigidTransform, frame: str = "world") -> "AugmentedCloud":
        return AugmentedCloud(
            transform.apply(self.positions),
            self.wavelengths_nm,
            self.reflectance,
            self.plants_probability,
            self.mass_density,
            frame,
        )

    @classmethod
    def concatenate(cls, clouds: Sequence["AugmentedCloud"]) -> "AugmentedCloud":
        if not clouds:
            return cls(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 0)))
        wl = clouds[0].wavelengths_nm
        for c in clouds[1:]:
            if c.wavelengths_nm.shape != wl.shape or not np.allclose(c.wavelengths_nm, wl):
                raise ValueError("clouds carry different band grids")
        return cls(
            np.concatenate([c.positions for c in clouds]),
            wl,
            np.concatenate([c.reflectance for c in clouds]),
            np.concatenate([c.plants_probability for c in clouds]),
            np.concatenate([c.mass_density for c in clouds]),
            clouds[0].frame,
        )


@dataclass
class SpectralCube:
    """Multispectral image, ``data`` shaped (height, width, bands)."""
    wavelengths_nm: NDArrayF
    data: NDArrayF

    def __post_init__(self):
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=np.float64).reshape(-1)
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[2] != self.wavelengths_nm.size:
            raise ValueError("cube data must be (height, width, bands) matching the wavelength list")

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


def _distort(x, y, coeffs):
    k1, k2, p1, p2, k3 = coeffs
    r2 = x * x + y * y
    radial = 1 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2
    xd = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
    yd = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y
    return xd, yd


def project_points(intr: CameraIntrinsics, extr: RigidTransform, points, near: float = NEAR_PLANE_M):
    """Project (N, 3) sensor-frame points; returns ``(uv, inside)``.

    ``uv`` is NaN for points at or behind the near plane. ``inside`` marks
    points whose nearest pixel lies within the image.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = extr.apply(pts)
    z = cam[:, 2]
    front = z > near
    safe_z = np.where(front, z, 1.0)
    x, y = cam[:, 0] / safe_z, cam[:, 1] / safe_z
    if len(intr.distortion):
        x, y = _distort(x, y, intr.coefficients)
    u = intr.fx * x + intr.cx
    v = intr.fy * y + intr.cy
    uv = np.stack([u, v], axis=1)
    uv[~front] = np.nan
    with np.errstate(invalid="ignore"):
        inside = front & (u >= -0.5) & (u < intr.width - 0.5) & (v >= -0.5) & (v < intr.height - 0.5)
    return uv, inside


def project_point(intr: CameraIntrinsics, extr: RigidTransform, p: LidarPoint, near: float = NEAR_PLANE_M):
    """Pixel coordinate ``(u, v)`` of one point, or ``None`` when outside the frustum."""
    uv, inside = project_points(intr, extr, [[p.x, p.y, p.z]], near)
    if not inside[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def nearest_pixels(uv):
    """Integer (col, row) of the pixel whose centre is closest to ``uv``."""
    return np.floor(uv + 0.5).astype(np.int64)


def augment_cloud(
    cloud,
    cube: SpectralCube,
    intr: CameraIntrinsics,
    extr: RigidTransform,
    calibration: Optional[SpectralCalibration] = None,
    near: float = NEAR_PLANE_M,
) -> AugmentedCloud:
    """Attach the nearest-pixel spectrum to every point of ``cloud``.

    ``cloud`` is an (N, 3+) array or a list of :class:`LidarPoint`. When a
    calibration is given the cube holds raw intensities and each sampled
    pixel is mapped to reflectance; otherwise the cube already holds
    reflectance. Output order equals input order.
    """
    if cube.width != intr.width or cube.height != intr.height:
        raise ValueError(
            f"cube is {cube.width}x{cube.height} but intrinsics expect {intr.width}x{intr.height}"
        )
    if len(cloud) and isinstance(cloud[0], LidarPoint):
        xyz = np.array([[p.x, p.y, p.z] for p in cloud], dtype=np.float64)
    else:
        xyz = np.asarray(cloud, dtype=np.float64).reshape(len(cloud), -1)[:, :3] if len(cloud) else np.zeros((0, 3))

    wl = cube.wavelengths_nm if calibration is None else calibration.output_wavelengths_nm
    refl = np.full((len(xyz), wl.size), np.nan)
    uv, inside = project_points(intr, extr, xyz, near)
    if inside.any():
        px = nearest_pixels(uv[inside])
        sampled = np.asarray(cube.data[px[:, 1], px[:, 0], :], dtype=np.float64)
        if calibration is not None:
            sampled, _ = calibrate_array(calibration.matrix, sampled)
        else:
            sampled = np.clip(sampled, 0.0, REFLECTANCE_CEILING)
        refl[inside] = sampled
    return AugmentedCloud(xyz, wl, refl)
