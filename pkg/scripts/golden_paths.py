"""Golden path-ranking run: full sensor pipeline on the three-path park, per seed.

Writes the grid and cost reports of the first seed to ``--out`` and prints
alpha per path for every seed, so the ranking's stability can be eyeballed.

    python3 scripts/golden_paths.py --seeds 11 12 13 --out runs/golden
"""
import argparse
from pathlib import Path

from vegtrav import io
from vegtrav.fusion import augment_cloud
from vegtrav.mapping import Pose, VoxelMap, flatten_to_grid, ransac_ground_plane
from vegtrav.scenario import generate_scene, golden_park_spec, render_nadir_view
from vegtrav.semantics import assign_mass_density
from vegtrav.traversal import RobotSpec, evaluate_candidates


def run(seed, noise_sigma, voxel, iterations):
    spec = golden_park_spec(seed=seed, noise_sigma=noise_sigma)
    scene = generate_scene(spec)
    view = render_nadir_view(scene)
    cloud = augment_cloud(view.lidar_pose.inverse().apply(scene.positions), view.cube,
                          view.intrinsics, view.lidar_to_camera, view.calibration)
    assign_mass_density(cloud)
    vm = VoxelMap(voxel).insert(cloud, Pose(view.lidar_pose))
    ground = ransac_ground_plane(vm.points(), spec.ground_threshold, iterations, seed=0)
    grid = flatten_to_grid(vm, ground, spec.ugv_height, spec.robot_mass, spec.cell_size,
                           bounds=(0.0, 0.0, *spec.extents))
    costs, selected = evaluate_candidates(spec.candidates, grid, RobotSpec(spec.robot_mass, spec.robot_width, spec.ugv_height))
    return spec, grid, costs, selected


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[11])
    ap.add_argument("--sigma", type=float, default=0.02)
    ap.add_argument("--voxel", type=float, default=0.2)
    ap.add_argument("--iterations", type=int, default=200)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)

    names = {"p1": "trees", "p4": "grass", "p7": "unknown"}
    for k, seed in enumerate(args.seeds):
        spec, grid, costs, selected = run(seed, args.sigma, args.voxel, args.iterations)
        summary = "  ".join(f"{c.path_id}({names.get(c.path_id, '?')}) alpha={c.alpha:.3f}" for c in costs)
        print(f"seed {seed}: {summary}  -> {selected}")
        if k == 0 and args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            io.write_grid(args.out / "grid", grid)
            io.write_costs(args.out / "costs", spec.candidates, costs, selected)


if __name__ == "__main__":
    main()
