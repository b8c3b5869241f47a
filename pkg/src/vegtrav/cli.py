"""Command-line driver: ``vegtrav {gen,fuse,bench,map,evaluate}``.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .fusion import augment_cloud
from .mapping import GroundPlane, Pose, VoxelMap, flatten_to_grid, ransac_ground_plane
from .scenario import (
    SceneSpec,
    generate_scene,
    golden_park_spec,
    park_scene_spec,
    reference_profiles,
    render_nadir_view,
)
from .semantics import assign_mass_density, benchmark_indices, class_mean_profiles, format_report_table
from .traversal import RobotSpec, evaluate_candidates, rasterize_path

log = logging.getLogger("vegtrav")

BUILTIN_SCENES = {"park": park_scene_spec, "golden": golden_park_spec}

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int = EXIT_INPUT):
        super().__init__(f"{stage}: {message}")
        self.code = code


def _config(args):
    return load_config(args.config, args.set or ())


def _load_scene_spec(source: str) -> SceneSpec:
    if source in BUILTIN_SCENES:
        return BUILTIN_SCENES[source]()
    path = Path(source)
    if not path.exists():
        raise io.InputError(f"{path}: no such file")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise io.InputError(f"{path}: invalid JSON ({exc})") from None
    try:
        return SceneSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"{path}: {exc}") from None


def cmd_gen(args) -> int:
    spec = _load_scene_spec(args.spec)
    if args.seed is not None:
        spec = SceneSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = generate_scene(spec)
    labels, counts = np.unique(scene.labels, return_counts=True)
    log.info("gen: seed %d, %s", spec.seed, ", ".join(f"{l}={c}" for l, c in zip(labels, counts)))
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    io.write_labeled_map(out / "labeled_map.csv", scene.positions, scene.labels, scene.reflectance, scene.wavelengths_nm)
    np.savetxt(out / "plants_mask.csv", scene.plants_mask.astype(int), fmt="%d")
    io.write_grid(out / "ground_truth", scene.ground_truth_grid)
    if spec.candidates:
        io.write_candidates(out / "candidates.json", spec.candidates)
    if not args.no_render:
        view = render_nadir_view(scene, pixel_size=args.pixel_size)
        lidar_xyz = view.lidar_pose.inverse().apply(scene.positions)
        io.write_cloud(out / "cloud.csv", lidar_xyz)
        io.write_cube_binary(out / "cube.bin", view.cube)
        io.write_camera(out / "camera.json", view.intrinsics, view.lidar_to_camera)
        io.write_calibration(out / "calibration.csv", view.calibration)
        io.write_poses(out / "poses.json", [Pose(view.lidar_pose, 0.0)])
    print(f"gen: {len(scene)} points -> {out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cloud = io.read_cloud(args.cloud)
    cube = io.read_cube(args.cube)
    intr, extr = io.read_camera(args.camera)
    cal = io.read_calibration(args.calibration) if args.calibration else None
    aug = augment_cloud(cloud[:, :3], cube, intr, extr, calibration=cal)
    log.info("fuse: cube %dx%dx%d, %d points outside the image", cube.width, cube.height,
             cube.wavelengths_nm.size, int((~aug.has_reflectance).sum()))
    io.write_augmented_cloud(args.out, aug)
    print(f"fuse: {int(aug.has_reflectance.sum())}/{len(aug)} points carry a spectrum -> {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    positions, labels, refl, wl = io.read_labeled_map(args.map)
    if args.profiles == "parametric":
        profiles = reference_profiles(wl)
    else:
        profiles = class_mean_profiles(refl, wl, labels)
    reports = benchmark_indices(refl, wl, labels, profiles=profiles, bins=cfg.otsu_bins, bands=cfg.band_config())
    if args.no_timing:
        reports = [dataclasses.replace(r, duration_ms=0.0) for r in reports]
    table = format_report_table(reports)
    sys.stdout.write(table)
    if args.out:
        io.write_reports_csv(args.out, reports)
        Path(args.out).with_suffix(".txt").write_text(table)
    return EXIT_OK


def cmd_map(args) -> int:
    cfg = _config(args)
    poses = io.read_poses(args.poses) if args.poses else [None] * len(args.clouds)
    if len(poses) != len(args.clouds):
        raise io.InputError(f"{len(args.clouds)} clouds but {len(poses)} poses")
    table = cfg.density_table()
    vmap = VoxelMap(cfg.grid.voxel_size_m)
    for path, pose in zip(args.clouds, poses):
        cloud = io.read_augmented_cloud(path)
        if np.isnan(cloud.mass_density[cloud.has_reflectance]).any():
            assign_mass_density(cloud, table, cfg.band_config())
        vmap.insert(cloud, pose)

    if len(vmap) >= 3:
        try:
            ground = ransac_ground_plane(vmap.points(), cfg.ransac.threshold_m, cfg.ransac.iterations, cfg.seed)
        except ValueError:
            ground = GroundPlane.horizontal(0.0, cfg.ransac.threshold_m)
    else:
        ground = GroundPlane.horizontal(0.0, cfg.ransac.threshold_m)
    log.info("map: ground normal %s offset %.4f m", np.round(ground.normal, 6).tolist(), ground.offset)
    grid = flatten_to_grid(vmap, ground, cfg.robot.height_m, cfg.robot.mass_kg, cfg.grid.cell_size_m,
                           bounds=args.bounds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_grid(out / "grid", grid)
    (out / "ground.json").write_text(json.dumps(
        {"normal": ground.normal.tolist(), "offset": ground.offset, "inlier_threshold": ground.inlier_threshold},
        indent=2, sort_keys=True) + "\n")
    print(f"map: {len(vmap)} voxels -> {grid.width}x{grid.height} grid in {out}")
    return EXIT_OK


def _overlay(grid, candidates, costs, selected):
    base = io.grid_to_image(grid)[::-1].astype(np.float64) * (191.0 / 255.0)
    img = np.round(base).astype(np.uint8)
    for cand, cost in zip(candidates, costs):
        cells = rasterize_path(cand, grid)
        ok = grid.contains(cells[:, 0], cells[:, 1])
        img[cells[ok, 1], cells[ok, 0]] = 192 + int(round(63 * cost.alpha))
    comments = [f"path {c.path_id} alpha={c.alpha:.6f}" + (" selected" if c.path_id == selected else "") for c in costs]
    return img[::-1], comments


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    grid = io.read_grid(args.grid)
    candidates = io.read_candidates(args.candidates)
    robot = RobotSpec(cfg.robot.mass_kg, cfg.robot.width_m, cfg.robot.height_m)
    costs, selected = evaluate_candidates(candidates, grid, robot)
    for c in costs:
        log.info("evaluate: %s crosses %d cells (%.2f m2)", c.path_id, len(c.cells), c.crossed_area)
    for c in costs:
        if not (0.0 <= c.alpha <= 1.0):
            raise StageError("evaluate", f"alpha {c.alpha} for {c.path_id} outside [0, 1]", EXIT_INTERNAL)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_costs(out / "costs", candidates, costs, selected)
    img, comments = _overlay(grid, candidates, costs, selected)
    io.write_pgm(out / "overlay.pgm", img, comments)
    for c in costs:
        print(f"{c.path_id}: alpha={c.alpha:.4f} mass={c.integrated_mass:.1f} kg")
    print(f"selected: {selected}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vegtrav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="pipeline config (JSON)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field, e.g. robot.mass_kg=300")
        return p

    p = sub.add_parser("gen", help="generate a synthetic scene")
    p.add_argument("spec", help="scene spec JSON file, or a builtin: " + ", ".join(BUILTIN_SCENES))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--pixel-size", type=float, default=0.05)
    p.add_argument("--no-render", action="store_true", help="skip the cube/cloud/camera outputs")
    p.set_defaults(func=cmd_gen, stage="gen")

    p = sub.add_parser("fuse", help="attach camera spectra to a LiDAR cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--cube", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--calibration")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse, stage="fuse")

    p = with_config(sub.add_parser("bench", help="benchmark vegetation segmentation methods"))
    p.add_argument("map", help="labeled map CSV")
    p.add_argument("--out", help="report CSV (a .txt table is written alongside)")
    p.add_argument("--profiles", choices=("class-mean", "parametric"), default="class-mean")
    p.add_argument("--no-timing", action="store_true", help="report 0 ms so outputs are byte-identical across runs")
    p.set_defaults(func=cmd_bench, stage="bench")

    p = with_config(sub.add_parser("map", help="build the mass-density grid"))
    p.add_argument("clouds", nargs="*", help="augmented cloud CSV files")
    p.add_argument("--poses", help="poses JSON, one per cloud")
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_map, stage="map")

    p = with_config(sub.add_parser("evaluate", help="score candidate paths on a grid"))
    p.add_argument("--grid", required=True, help="grid JSON sidecar or CSV")
    p.add_argument("--candidates", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate, stage="evaluate")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (io.InputError, OSError, ValueError, KeyError) as exc:
        print(f"error: {args.stage}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {args.stage}: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
