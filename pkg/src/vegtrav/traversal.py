"""Velocity-loss coefficient of candidate paths over a mass-density grid.

A robot of mass ``m_R`` colliding inelastically with mass ``m`` keeps
``m_R / (m_R + m)`` of its speed. Chaining collisions over a path and letting
the particle size vanish gives ``alpha = exp(-M / m_R)`` with ``M`` the mass
crossed; ``alpha = 1`` is free passage and ``alpha -> 0`` a full stop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mapping import MassDensityGrid

_EPS = 1e-12


@dataclass(frozen=True)
class RobotSpec:
    mass: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.mass > 0 and self.width > 0 and self.height > 0):
            raise ValueError("robot mass, width and height must be positive")


@dataclass(frozen=True)
class PathCandidate:
    id: str
    waypoints: tuple
    width: float

    def __post_init__(self):
        pts = np.asarray(self.waypoints, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"path {self.id!r}: needs at least 2 (x, y) waypoints")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"path {self.id!r}: waypoints must be finite")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise ValueError(f"path {self.id!r}: consecutive waypoints must differ")
        if not self.width > 0:
            raise ValueError(f"path {self.id!r}: swept width must be positive")
        object.__setattr__(self, "waypoints", tuple((float(x), float(y)) for x, y in pts))
        object.__setattr__(self, "width", float(self.width))

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.waypoints)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


@dataclass(frozen=True)
class CellContribution:
    ix: int
    iy: int
    density: float
    mass: float


@dataclass(frozen=True)
class TraversalCost:
    alpha: float
    log_alpha: float
    crossed_area: float
    integrated_mass: float
    robot_mass: float
    cells: tuple = ()
    path_id: str = ""

    @property
    def kinetic_energy_loss(self) -> float:
        return kinetic_energy_loss(self.alpha)


def _check_mass(m_R: float):
    if not (m_R > 0 and math.isfinite(m_R)):
        raise ValueError(f"robot mass must be positive, got {m_R}")


def collision_alpha(m_R: float, m_i: float) -> float:
    """Speed ratio after one perfectly inelastic collision."""
    _check_mass(m_R)
    if m_i < 0:
        raise ValueError("obstacle mass must be >= 0")
    return m_R / (m_R + m_i)


def alpha_discrete(m_R: float, densities, delta_a: float) -> float:
    """Product of per-particle collision ratios for particles of area ``delta_a``.

    Evaluated as ``exp(-sum(log1p(d * delta_a / m_R)))`` to avoid underflow
    on long products.
    """
    _check_mass(m_R)
    if not delta_a > 0:
        raise ValueError("particle area must be positive")
    d = np.asarray(densities, dtype=np.float64).reshape(-1)
    if np.any(d < 0):
        raise ValueError("densities must be >= 0")
    return float(np.exp(-np.sum(np.log1p(d * delta_a / m_R))))


def alpha_continuous(m_R: float, density_integral: float) -> float:
    """``exp(-integral / m_R)`` for the mass integrated along the path (kg)."""
    _check_mass(m_R)
    if density_integral < 0:
        raise ValueError("integrated mass must be >= 0")
    return math.exp(-density_integral / m_R)


def kinetic_energy_loss(alpha: float) -> float:
    """Fraction of kinetic energy lost, ``1 - alpha**2``."""
    return 1.0 - alpha * alpha


def alpha_grid(m_R: float, grid: MassDensityGrid, crossed_cells, path_id: str = "") -> TraversalCost:
    """Cost of crossing whole cells of constant density (cells listed once each)."""
    _check_mass(m_R)
    cells = np.asarray(crossed_cells, dtype=np.int64).reshape(-1, 2)
    dens = grid.density_at(cells[:, 0], cells[:, 1]) if len(cells) else np.zeros(0)
    masses = dens * grid.cell_area
    total = float(np.sum(masses))
    log_alpha = -total / m_R
    breakdown = tuple(
        CellContribution(int(ix), int(iy), float(d), float(m))
        for (ix, iy), d, m in zip(cells, dens, masses)
    )
    return TraversalCost(
        alpha=math.exp(log_alpha),
        log_alpha=log_alpha,
        crossed_area=len(cells) * grid.cell_area,
        integrated_mass=total,
        robot_mass=float(m_R),
        cells=breakdown,
        path_id=path_id,
    )


def _rect_hits_boxes(p0, p1, half_w, x0, y0, x1, y1):
    """Positive-area overlap of the segment's swept rectangle with boxes.

    Separating-axis test over the box axes and the rectangle's own axes;
    touching along an edge is not an overlap.
    """
    d = p1 - p0
    length = math.hypot(d[0], d[1])
    u = d / length
    n = np.array([-u[1], u[0]])
    corners = np.array([p0 + n * half_w, p0 - n * half_w, p1 - n * half_w, p1 + n * half_w])
    hit = (x0 < corners[:, 0].max() - _EPS) & (x1 > corners[:, 0].min() + _EPS)
    hit &= (y0 < corners[:, 1].max() - _EPS) & (y1 > corners[:, 1].min() + _EPS)
    for axis, lo, hi in ((u, 0.0, length), (n, -half_w, half_w)):
        base = p0 @ axis
        # project the box corners onto the axis
        px = np.stack([x0, x1]) * axis[0]
        py = np.stack([y0, y1]) * axis[1]
        proj_min = px.min(axis=0) + py.min(axis=0) - base
        proj_max = px.max(axis=0) + py.max(axis=0) - base
        hit &= (proj_min < hi - _EPS) & (proj_max > lo + _EPS)
    return hit


def _disc_hits_boxes(c, r, x0, y0, x1, y1):
    qx = np.clip(c[0], x0, x1)
    qy = np.clip(c[1], y0, y1)
    return (qx - c[0]) ** 2 + (qy - c[1]) ** 2 < r * r - _EPS


def rasterize_path(path: PathCandidate, grid: MassDensityGrid) -> np.ndarray:
    """Cells ``(ix, iy)`` overlapped by the path swept to its width.

    The footprint is the union of one flat-capped rectangle per segment and a
    disc at every interior waypoint (the robot turning in place). A cell is
    crossed when it shares positive area with the footprint; each appears
    once, sorted by (iy, ix). Indices may fall outside the grid.
    """
    pts = path.points
    half = path.width / 2.0
    ox, oy = grid.origin
    cs = grid.cell_size
    lo = pts.min(axis=0) - half
    hi = pts.max(axis=0) + half
    ix_range = np.arange(int(math.floor((lo[0] - ox) / cs)), int(math.floor((hi[0] - ox) / cs)) + 1)
    iy_range = np.arange(int(math.floor((lo[1] - oy) / cs)), int(math.floor((hi[1] - oy) / cs)) + 1)
    IX, IY = np.meshgrid(ix_range, iy_range)
    IX, IY = IX.ravel(), IY.ravel()
    x0, y0 = ox + IX * cs, oy + IY * cs
    x1, y1 = x0 + cs, y0 + cs

    hit = np.zeros(IX.shape, dtype=bool)
    for a, b in zip(pts[:-1], pts[1:]):
        hit |= _rect_hits_boxes(a, b, half, x0, y0, x1, y1)
    for c in pts[1:-1]:
        hit |= _disc_hits_boxes(c, half, x0, y0, x1, y1)
    order = np.lexsort((IX[hit], IY[hit]))
    return np.stack([IX[hit][order], IY[hit][order]], axis=1)


def evaluate_path(path: PathCandidate, grid: MassDensityGrid, robot: RobotSpec) -> TraversalCost:
    return alpha_grid(robot.mass, grid, rasterize_path(path, grid), path.id)


def evaluate_candidates(candidates: Sequence[PathCandidate], grid: MassDensityGrid, robot: RobotSpec):
    """Cost every candidate and pick the one keeping the most speed.

    Ties on alpha go to the shorter path, then the smaller id. Returns
    ``(costs, selected_id)`` with costs in input order.
    """
    if not candidates:
        raise ValueError("no candidate paths to evaluate")
    costs = [evaluate_path(c, grid, robot) for c in candidates]
    best = min(
        range(len(candidates)),
        key=lambda i: (-costs[i].log_alpha, candidates[i].length, candidates[i].id),
    )
    return costs, candidates[best].id
