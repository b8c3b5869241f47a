"""File formats for cubes, clouds, calibrations, grids, candidates and reports.

Byte layouts of the binary forms are documented in ``docs/formats.md``.
Floats in text files are written with ``repr`` so files round-trip exactly
and repeated runs are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .fusion import AugmentedCloud, CameraIntrinsics, RigidTransform, SpectralCube
from .mapping import MassDensityGrid, Pose
from .semantics import LABELS, SegmentationReport
from .spectral import SpectralCalibration
from .traversal import PathCandidate, TraversalCost


class InputError(ValueError):
    """Malformed or missing input file."""


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _wl_header(wavelengths) -> list:
    return [f"{w:g}" for w in wavelengths]


def _read_rows(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    return rows[0], rows[1:]


def _floats(row, path, lineno):
    try:
        return [float(v) if v != "" else math.nan for v in row]
    except ValueError as exc:
        raise InputError(f"{path}:{lineno}: {exc}") from None


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- spectral cubes -------------------------------------------------------

_CUBE_HEADER = struct.Struct("<III")


def write_cube_binary(path, cube: SpectralCube) -> None:
    h, w, b = cube.data.shape
    with open(path, "wb") as fh:
        fh.write(_CUBE_HEADER.pack(w, h, b))
        fh.write(np.asarray(cube.wavelengths_nm, dtype="<f4").tobytes())
        planes = np.ascontiguousarray(np.moveaxis(np.asarray(cube.data, dtype="<f4"), 2, 0))
        fh.write(planes.tobytes())


def read_cube_binary(path) -> SpectralCube:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    raw = path.read_bytes()
    if len(raw) < _CUBE_HEADER.size:
        raise InputError(f"{path}: truncated cube header")
    w, h, b = _CUBE_HEADER.unpack_from(raw)
    expected = _CUBE_HEADER.size + 4 * b + 4 * b * w * h
    if len(raw) != expected:
        raise InputError(f"{path}: expected {expected} bytes for a {w}x{h}x{b} cube, got {len(raw)}")
    off = _CUBE_HEADER.size
    wl = np.frombuffer(raw, dtype="<f4", count=b, offset=off).astype(np.float64)
    planes = np.frombuffer(raw, dtype="<f4", count=b * w * h, offset=off + 4 * b).reshape(b, h, w)
    return SpectralCube(wl, np.moveaxis(planes, 0, 2).astype(np.float32))


def write_cube_csv(path, cube: SpectralCube) -> None:
    h, w, _ = cube.data.shape
    rows = (
        [str(x), str(y), *(_fmt(v) for v in cube.data[y, x])]
        for y in range(h) for x in range(w)
    )
    _write_csv(path, ["x", "y", *_wl_header(cube.wavelengths_nm)], rows)


def read_cube_csv(path) -> SpectralCube:
    header, rows = _read_rows(path)
    if header[:2] != ["x", "y"] or len(header) < 3:
        raise InputError(f"{path}: cube CSV header must be x,y,<wavelength>...")
    wl = np.array(_floats(header[2:], path, 1))
    if not rows:
        raise InputError(f"{path}: cube has no pixels")
    arr = np.array([_floats(r, path, i + 2) for i, r in enumerate(rows)])
    xs, ys = arr[:, 0].astype(int), arr[:, 1].astype(int)
    data = np.zeros((ys.max() + 1, xs.max() + 1, wl.size), dtype=np.float32)
    data[ys, xs] = arr[:, 2:]
    return SpectralCube(wl, data)


def read_cube(path) -> SpectralCube:
    return read_cube_csv(path) if str(path).endswith(".csv") else read_cube_binary(path)


def write_cube(path, cube: SpectralCube) -> None:
    (write_cube_csv if str(path).endswith(".csv") else write_cube_binary)(path, cube)


# --- raw LiDAR clouds -----------------------------------------------------

_CLOUD_HEADER = struct.Struct("<II")


def write_cloud(path, xyz, intensity=None) -> None:
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    cols = xyz if intensity is None else np.column_stack([xyz, intensity])
    if str(path).endswith(".csv"):
        header = ["x", "y", "z"] + ([] if intensity is None else ["intensity"])
        _write_csv(path, header, ([_fmt(v) for v in row] for row in cols))
    else:
        with open(path, "wb") as fh:
            fh.write(_CLOUD_HEADER.pack(len(cols), cols.shape[1]))
            fh.write(np.asarray(cols, dtype="<f4").tobytes())


def read_cloud(path) -> np.ndarray:
    """(N, 3) or (N, 4) array from a CSV or binary cloud file."""
    path = Path(path)
    if str(path).endswith(".csv"):
        header, rows = _read_rows(path)
        if header[:3] != ["x", "y", "z"]:
            raise InputError(f"{path}: cloud CSV header must start with x,y,z")
        arr = np.array([_floats(r, path, i + 2) for i, r in enumerate(rows)]).reshape(-1, len(header))
    else:
        if not path.exists():
            raise InputError(f"{path}: no such file")
        raw = path.read_bytes()
        if len(raw) < _CLOUD_HEADER.size:
            raise InputError(f"{path}: truncated cloud header")
        n, fields = _CLOUD_HEADER.unpack_from(raw)
        if fields not in (3, 4) or len(raw) != _CLOUD_HEADER.size + 4 * n * fields:
            raise InputError(f"{path}: inconsistent binary cloud header")
        arr = np.frombuffer(raw, dtype="<f4", offset=_CLOUD_HEADER.size).reshape(n, fields).astype(np.float64)
    if not np.all(np.isfinite(arr[:, :3])):
        raise InputError(f"{path}: non-finite coordinates")
    return arr


# --- augmented and labeled clouds -----------------------------------------

def write_augmented_cloud(path, cloud: AugmentedCloud) -> None:
    header = ["x", "y", "z", "plants_probability", "mass_density", *_wl_header(cloud.wavelengths_nm)]
    rows = (
        [*(_fmt(v) for v in cloud.positions[i]), _fmt(cloud.plants_probability[i]),
         _fmt(cloud.mass_density[i]), *(_fmt(v) for v in cloud.reflectance[i])]
        for i in range(len(cloud))
    )
    _write_csv(path, header, rows)


def read_augmented_cloud(path) -> AugmentedCloud:
    header, rows = _read_rows(path)
    if header[:5] != ["x", "y", "z", "plants_probability", "mass_density"]:
        raise InputError(f"{path}: augmented cloud header must start with x,y,z,plants_probability,mass_density")
    wl = np.array(_floats(header[5:], path, 1))
    arr = np.array([_floats(r, path, i + 2) for i, r in enumerate(rows)]).reshape(-1, len(header))
    try:
        return AugmentedCloud(arr[:, :3], wl, arr[:, 5:], arr[:, 3], arr[:, 4])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_labeled_map(path, positions, labels, reflectance, wavelengths_nm) -> None:
    header = ["x", "y", "z", "label", *_wl_header(wavelengths_nm)]
    rows = (
        [*(_fmt(v) for v in positions[i]), labels[i], *(_fmt(v) for v in reflectance[i])]
        for i in range(len(positions))
    )
    _write_csv(path, header, rows)


def read_labeled_map(path):
    """Returns ``(positions, labels, reflectance, wavelengths)``."""
    header, rows = _read_rows(path)
    if header[:4] != ["x", "y", "z", "label"] or len(header) < 5:
        raise InputError(f"{path}: labeled map header must be x,y,z,label,<wavelength>...")
    if not rows:
        raise InputError(f"{path}: labeled map has no points")
    wl = np.array(_floats(header[4:], path, 1))
    labels = []
    values = []
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise InputError(f"{path}:{i + 2}: expected {len(header)} fields, got {len(r)}")
        if r[3] not in LABELS:
            raise InputError(f"{path}:{i + 2}: unknown label {r[3]!r}")
        labels.append(r[3])
        values.append(_floats(r[:3] + r[4:], path, i + 2))
    arr = np.array(values)
    return arr[:, :3], np.array(labels), arr[:, 3:], wl


# --- calibrations and poses -----------------------------------------------

def write_calibration(path, cal: SpectralCalibration) -> None:
    header = ["wavelength_nm", *(f"in_{j}" for j in range(cal.n_inputs))]
    rows = ([f"{w:g}", *(_fmt(v) for v in row)] for w, row in zip(cal.output_wavelengths_nm, cal.matrix))
    _write_csv(path, header, rows)


def read_calibration(path) -> SpectralCalibration:
    header, rows = _read_rows(path)
    if header[0] != "wavelength_nm":
        raise InputError(f"{path}: calibration header must start with wavelength_nm")
    arr = np.array([_floats(r, path, i + 2) for i, r in enumerate(rows)]).reshape(-1, len(header))
    try:
        return SpectralCalibration(arr[:, 1:], arr[:, 0])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def _load_json(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_camera(path, intr: CameraIntrinsics, extr: RigidTransform) -> None:
    _dump_json(path, {
        "intrinsics": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                       "width": intr.width, "height": intr.height, "distortion": list(intr.distortion)},
        "lidar_to_camera": extr.as_matrix().tolist(),
    })


def read_camera(path):
    d = _load_json(path)
    try:
        i = d["intrinsics"]
        intr = CameraIntrinsics(float(i["fx"]), float(i["fy"]), float(i["cx"]), float(i["cy"]),
                                int(i["width"]), int(i["height"]), tuple(i.get("distortion", ())))
        extr = RigidTransform.from_matrix(d["lidar_to_camera"])
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    return intr, extr


def write_poses(path, poses: Sequence[Pose]) -> None:
    _dump_json(path, {"poses": [{"timestamp": p.timestamp, "matrix": p.transform.as_matrix().tolist()} for p in poses]})


def read_poses(path) -> list:
    d = _load_json(path)
    try:
        return [Pose(RigidTransform.from_matrix(p["matrix"]), float(p.get("timestamp", 0.0))) for p in d["poses"]]
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


# --- density grids --------------------------------------------------------

def write_grid(stem, grid: MassDensityGrid) -> dict:
    """Write ``<stem>.csv``, ``<stem>.json`` and ``<stem>.pgm``; returns the paths."""
    stem = Path(stem)
    paths = {ext: stem.with_suffix("." + ext) for ext in ("csv", "json", "pgm")}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in grid.values:
            w.writerow([_fmt(v) for v in row])
    _dump_json(paths["json"], {
        "csv": paths["csv"].name,
        "origin": list(grid.origin),
        "cell_size": grid.cell_size,
        "width": grid.width,
        "height": grid.height,
        "init_density": grid.init_density,
        "row_order": "row 0 holds the lowest y; column 0 the lowest x",
        "observed": grid.observed.astype(int).tolist(),
    })
    write_pgm(paths["pgm"], grid_to_image(grid))
    return paths


def read_grid(path) -> MassDensityGrid:
    """Load a grid from its JSON sidecar (or the CSV next to it)."""
    path = Path(path)
    side = path.with_suffix(".json")
    meta = _load_json(side)
    try:
        csv_path = side.parent / meta.get("csv", side.with_suffix(".csv").name)
        with open(csv_path, newline="") as fh:
            values = np.array([[float(v) for v in row] for row in csv.reader(fh)], dtype=np.float64)
        observed = np.array(meta["observed"], dtype=bool)
        grid = MassDensityGrid(float(meta["cell_size"]), tuple(meta["origin"]),
                               values.reshape(int(meta["height"]), int(meta["width"])),
                               observed, float(meta["init_density"]))
    except KeyError as exc:
        raise InputError(f"{side}: missing field {exc.args[0]!r}") from None
    except (OSError, ValueError) as exc:
        raise InputError(f"{side}: {exc}") from None
    return grid


def grid_to_image(grid: MassDensityGrid, vmax: float | None = None) -> np.ndarray:
    """8-bit log-scaled density image, north up (top row = highest y)."""
    v = np.log1p(grid.values)
    top = np.log1p(vmax) if vmax is not None else max(float(v.max()), 1e-12)
    img = np.clip(np.round(255.0 * v / top), 0, 255).astype(np.uint8)
    return img[::-1]


def write_pgm(path, image: np.ndarray, comments: Sequence[str] = ()) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{w} {h}\n255\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path):
    """Returns ``(image, comments)`` for a binary 8-bit PGM."""
    raw = Path(path).read_bytes()
    tokens, comments, pos = [], [], 0
    while len(tokens) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            tokens += line.split()
    if tokens[0] != "P5":
        raise InputError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w), comments


# --- candidates and cost reports ------------------------------------------

def read_candidates(path) -> list:
    d = _load_json(path)
    items = d.get("candidates") if isinstance(d, dict) else d
    if not isinstance(items, list):
        raise InputError(f"{path}: expected a list under 'candidates'")
    out = []
    for k, c in enumerate(items):
        where = f"{path}: candidates[{k}]"
        if not isinstance(c, dict):
            raise InputError(f"{where}: expected an object")
        for key in ("id", "waypoints", "width"):
            if key not in c:
                raise InputError(f"{where}: missing field '{key}'")
        try:
            wps = tuple((float(x), float(y)) for x, y in c["waypoints"])
        except (TypeError, ValueError):
            raise InputError(f"{where}: field 'waypoints' must be a list of [x, y] pairs") from None
        try:
            width = float(c["width"])
        except (TypeError, ValueError):
            raise InputError(f"{where}: field 'width' must be a number") from None
        try:
            out.append(PathCandidate(str(c["id"]), wps, width))
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from None
    return out


def write_candidates(path, candidates: Sequence[PathCandidate]) -> None:
    _dump_json(path, {"candidates": [
        {"id": c.id, "waypoints": [list(w) for w in c.waypoints], "width": c.width} for c in candidates
    ]})


def write_costs(stem, candidates, costs: Sequence[TraversalCost], selected: str) -> dict:
    stem = Path(stem)
    paths = {"csv": stem.with_suffix(".csv"), "json": stem.with_suffix(".json")}
    header = ["id", "alpha", "log_alpha", "integrated_mass_kg", "crossed_area_m2", "cells", "length_m", "selected"]
    rows = [
        [c.path_id, _fmt(c.alpha), _fmt(c.log_alpha), _fmt(c.integrated_mass), _fmt(c.crossed_area),
         str(len(c.cells)), _fmt(p.length), str(int(c.path_id == selected))]
        for p, c in zip(candidates, costs)
    ]
    _write_csv(paths["csv"], header, rows)
    _dump_json(paths["json"], {
        "selected": selected,
        "robot_mass": costs[0].robot_mass if costs else None,
        "candidates": [
            {"id": c.path_id, "alpha": c.alpha, "log_alpha": c.log_alpha,
             "integrated_mass": c.integrated_mass, "crossed_area": c.crossed_area,
             "kinetic_energy_loss": c.kinetic_energy_loss,
             "cells": [{"ix": e.ix, "iy": e.iy, "density": e.density, "mass": e.mass} for e in c.cells]}
            for c in costs
        ],
    })
    return paths


def write_reports_csv(path, reports: Sequence[SegmentationReport]) -> None:
    header = ["index", "iou", "precision", "recall", "accuracy", "f1", "specificity", "duration_ms"]
    _write_csv(path, header, ([r.index_name, *(_fmt(v) for v in r.row())] for r in reports))
