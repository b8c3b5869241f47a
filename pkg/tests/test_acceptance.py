"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in pytest's terminal summary (see conftest.py),
so ``pytest -v`` output carries the full verdict table.
"""
import math
import time
from collections import Counter
from fractions import Fraction

import numpy as np
from vegtrav import cli
from vegtrav.fusion import RigidTransform, augment_cloud
from vegtrav.mapping import MassDensityGrid, Pose, VoxelMap, flatten_to_grid, ransac_ground_plane
from vegtrav.scenario import generate_scene, golden_park_spec, park_scene_spec, render_nadir_view
from vegtrav.semantics import (
    ClassDensityTable,
    assign_mass_density,
    benchmark_indices,
    class_mean_profiles,
    evaluate_segmentation,
    expected_mass_density,
)
from vegtrav.spectral import otsu_threshold
from vegtrav.traversal import (
    PathCandidate,
    RobotSpec,
    alpha_continuous,
    alpha_discrete,
    alpha_grid,
    evaluate_candidates,
    rasterize_path,
)

RESULTS: dict = {}


def verdict(number, title, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    RESULTS[number] = line
    print(line)
    assert ok, line


# 1 -------------------------------------------------------------------------------

def test_criterion_01_bound_ordering():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    violations = 0
    for _ in range(1000):
        d = rng.uniform(0.0, 2400.0, rng.integers(1, 200))
        da = 1.0 - rng.random()  # (0, 1]
        m_r = rng.uniform(50.0, 2000.0)
        if not alpha_discrete(m_r, d, da) >= alpha_continuous(m_r, math.fsum(d * da)):
            violations += 1
    dt = time.perf_counter() - t0
    verdict(1, "alpha_discrete >= alpha_continuous on 1000 random partitions",
            violations == 0 and dt < 1.0, f"{violations} violations, {dt:.3f} s")


# 2 -------------------------------------------------------------------------------

def test_criterion_02_convergence():
    t0 = time.perf_counter()
    n = 10**6
    err = abs(alpha_discrete(250.0, np.full(n, 20.0), 1.0 / n) - math.exp(-0.08))
    dt = time.perf_counter() - t0
    verdict(2, "N = 1e6 particles converge to exp(-0.08)", err < 1e-4 and dt < 1.0, f"err {err:.2e}, {dt:.3f} s")


# 3 -------------------------------------------------------------------------------

def test_criterion_03_expected_density_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 7))
        dens = rng.uniform(0.0, 2400.0, n)
        lik = rng.random(n) * 10.0 ** rng.uniform(-3, 3)
        if lik.sum() == 0:
            continue
        table = ClassDensityTable.from_pairs((f"c{i}", d) for i, d in enumerate(dens))
        oracle = math.fsum(float(d) * float(l) for d, l in zip(dens, lik)) / math.fsum(lik)
        got = expected_mass_density(table, lik)
        worst = max(worst, abs(got - oracle) / max(abs(oracle), 1e-300))
    verdict(3, "expected_mass_density matches brute-force weighted mean on 1e4 tables",
            worst <= 1e-12, f"max rel err {worst:.1e}")


# 4 -------------------------------------------------------------------------------

def test_criterion_04_confusion_oracle():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 10_001))
        bias = rng.random(2)
        pred = rng.random(n) < bias[0]
        truth = rng.random(n) < bias[1]
        c = Counter(zip(pred.tolist(), truth.tolist()))
        tp, fp, fn, tn = c[(True, True)], c[(True, False)], c[(False, True)], c[(False, False)]
        frac = lambda a, b: float(Fraction(a, b)) if b else 0.0
        expected = (tp, fp, fn, tn, frac(tp, tp + fp + fn), frac(tp, tp + fp), frac(tp, tp + fn),
                    frac(tp + tn, n), frac(2 * tp, 2 * tp + fp + fn), frac(tn, tn + fp))
        r = evaluate_segmentation(pred, truth)
        got = (r.tp, r.fp, r.fn, r.tn, r.iou, r.precision, r.recall, r.accuracy, r.f1, r.specificity)
        mismatches += got != expected
    verdict(4, "confusion metrics equal exhaustive counting on 1e3 masks", mismatches == 0,
            f"{mismatches} mismatches")


# 5 -------------------------------------------------------------------------------

def brute_force_otsu(values, bins):
    """Exact w0*w1*(mu0-mu1)^2 over the same histogram, first maximum wins."""
    counts, edges = np.histogram(values, bins=bins, range=(float(np.min(values)), float(np.max(values))))
    lo, hi = Fraction(float(np.min(values))), Fraction(float(np.max(values)))
    width = (hi - lo) / bins
    centre = [lo + (i + Fraction(1, 2)) * width for i in range(bins)]
    n = int(counts.sum())
    total = sum(int(c) * m for c, m in zip(counts, centre))
    n0, s0 = 0, Fraction(0)
    best, best_k = Fraction(-1), None
    for k in range(1, bins):
        n0 += int(counts[k - 1])
        s0 += int(counts[k - 1]) * centre[k - 1]
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        var = Fraction(n0 * n1, n * n) * (s0 / n0 - (total - s0) / n1) ** 2
        if var > best:
            best, best_k = var, k
    return float(edges[best_k])


def test_criterion_05_otsu_oracle():
    rng = np.random.default_rng(5)
    mismatches = 0
    for i in range(200):
        size = int(rng.integers(2, 1001))
        kind = i % 4
        if kind == 0:
            v = rng.random(size)
        elif kind == 1:
            v = np.concatenate([rng.normal(0.2, 0.05, size // 2 + 1), rng.normal(0.7, 0.1, size // 2 + 1)])
        elif kind == 2:
            v = rng.integers(0, 12, size).astype(float)  # heavy ties
        else:
            v = rng.lognormal(0, 1.5, size)
        if v.min() == v.max():
            v[0] += 1.0
        bins = 256 if i % 2 == 0 else int(rng.integers(2, 64))
        mismatches += otsu_threshold(v, bins) != brute_force_otsu(v, bins)
    verdict(5, "otsu_threshold equals exact brute force on 200 value sets", mismatches == 0,
            f"{mismatches} mismatches")


# 6 -------------------------------------------------------------------------------

def test_criterion_06_ndvi_ranks_first():
    t0 = time.perf_counter()
    scene = generate_scene(park_scene_spec(seed=7, noise_sigma=0.02))
    profiles = class_mean_profiles(scene.reflectance, scene.wavelengths_nm, scene.labels)
    reports = benchmark_indices(scene.reflectance, scene.wavelengths_nm, scene.labels, profiles=profiles)
    dt = time.perf_counter() - t0
    ranked = sorted(reports, key=lambda r: -r.iou)
    ndvi = next(r for r in reports if r.index_name == "ndvi")
    ok = (len(scene) >= 100_000 and len(reports) == 13 and ndvi.iou >= 0.90
          and ranked[0].index_name == "ndvi" and ranked[1].iou < ndvi.iou and dt < 60.0)
    verdict(6, "ndvi + Otsu IoU >= 0.90 and first of 13 on the park scene", ok,
            f"{len(scene)} points, ndvi {ndvi.iou:.4f}, runner-up {ranked[1].index_name} {ranked[1].iou:.4f}, {dt:.1f} s")


# 7 -------------------------------------------------------------------------------

def golden_pipeline(spec):
    """Scene -> camera cube -> fusion -> densities -> voxel map -> RANSAC -> grid -> path costs."""
    scene = generate_scene(spec)
    view = render_nadir_view(scene)
    sensor_pts = view.lidar_pose.inverse().apply(scene.positions)
    cloud = augment_cloud(sensor_pts, view.cube, view.intrinsics, view.lidar_to_camera, view.calibration)
    assign_mass_density(cloud)
    vm = VoxelMap(0.2).insert(cloud, Pose(view.lidar_pose))
    ground = ransac_ground_plane(vm.points(), spec.ground_threshold, 200, seed=0)
    grid = flatten_to_grid(vm, ground, spec.ugv_height, spec.robot_mass, spec.cell_size,
                           bounds=(0.0, 0.0, *spec.extents))
    robot = RobotSpec(spec.robot_mass, spec.robot_width, spec.ugv_height)
    costs, selected = evaluate_candidates(spec.candidates, grid, robot)
    return {c.path_id: c.alpha for c in costs}, selected


def test_criterion_07_golden_ranking():
    t0 = time.perf_counter()
    spec = golden_park_spec()
    assert (spec.plants_density, spec.not_plants_density, spec.robot_mass) == (20.0, 2400.0, 250.0)
    alpha, selected = golden_pipeline(spec)
    dt = time.perf_counter() - t0
    grass, unknown, trees = alpha["p4"], alpha["p7"], alpha["p1"]
    ok = grass > unknown > trees and grass >= 0.85 and trees <= 0.5 and selected == "p4" and dt < 10.0
    verdict(7, "golden scenario: grass > unknown > trees, grass selected", ok,
            f"grass {grass:.3f}, unknown {unknown:.3f}, trees {trees:.3f}, selected {selected}, {dt:.1f} s")


# 8 -------------------------------------------------------------------------------

def test_criterion_08_ransac_accuracy_and_determinism():
    scene = generate_scene(golden_park_spec())
    ang = math.radians(6.0)
    c, s = math.cos(ang), math.sin(ang)
    rot = np.array([[1, 0, 0], [0, c, -s], [0, s, c]]) @ np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    tilt = RigidTransform(rot, np.array([3.0, -2.0, 1.25]))
    pts = tilt.apply(scene.positions)
    true_normal = rot @ np.array([0.0, 0.0, 1.0])
    true_offset = float(true_normal @ tilt.translation)

    a = ransac_ground_plane(pts, 0.05, 200, seed=0)
    b = ransac_ground_plane(pts, 0.05, 200, seed=0)
    angle = math.degrees(math.acos(min(1.0, float(a.normal @ true_normal))))
    off_err = abs(a.offset - true_offset)
    identical = a.normal.tobytes() == b.normal.tobytes() and a.offset == b.offset
    ok = angle < 0.5 and off_err < 0.01 and identical
    verdict(8, "RANSAC normal within 0.5 deg, offset within 1 cm, bit-identical", ok,
            f"{angle:.4f} deg, {off_err * 100:.3f} cm, identical={identical}")


# 9 -------------------------------------------------------------------------------

def run_pipeline(root):
    s = root / "scene"
    steps = [
        ["gen", "golden", "--out", s, "--seed", "11"],
        ["fuse", "--cloud", s / "cloud.csv", "--cube", s / "cube.bin", "--camera", s / "camera.json",
         "--calibration", s / "calibration.csv", "--out", root / "aug.csv"],
        ["map", root / "aug.csv", "--poses", s / "poses.json", "--bounds", "0", "0", "16", "12",
         "--out-dir", root / "map"],
        ["evaluate", "--grid", root / "map" / "grid.json", "--candidates", s / "candidates.json",
         "--out-dir", root / "eval"],
    ]
    return [cli.main([str(x) for x in step]) for step in steps]


def test_criterion_09_end_to_end_determinism(tmp_path):
    codes = run_pipeline(tmp_path / "a") + run_pipeline(tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    differ = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    must = {"map/grid.csv", "eval/costs.csv", "eval/costs.json"}
    ok = codes == [0] * 8 and not differ and must <= {str(f) for f in files}
    verdict(9, "gen -> fuse -> map -> evaluate twice is byte-identical", ok,
            f"{len(files)} files compared, {len(differ)} differ")


# 10 ------------------------------------------------------------------------------

def random_case(rng):
    h, w = (int(v) for v in rng.integers(2, 13, 2))
    cell = float(rng.choice([0.25, 0.5, 1.0]))
    values = rng.uniform(0.0, 2400.0, (h, w)) * (rng.random((h, w)) < 0.6)
    grid = MassDensityGrid(cell, (0.0, 0.0), values, np.ones((h, w), bool), 250.0)
    k = int(rng.integers(2, 5))
    wps = rng.uniform(0, [w * cell, h * cell], (k, 2))
    path = PathCandidate("p", tuple(map(tuple, wps)), float(rng.uniform(0.1, 1.0)))
    return grid, path, float(rng.uniform(250.0, 2000.0))


def test_criterion_10_monotonicity():
    rng = np.random.default_rng(10)
    add_fail = mass_fail = 0
    for _ in range(500):
        grid, path, m_r = random_case(rng)
        cells = rasterize_path(path, grid)
        crossed = {tuple(c) for c in cells.tolist()}
        free = [(ix, iy) for iy in range(grid.height) for ix in range(grid.width) if (ix, iy) not in crossed]
        base = alpha_grid(m_r, grid, cells)
        if free:
            ix, iy = free[int(rng.integers(len(free)))]
            grid.values[iy, ix] = rng.uniform(0.0, 2400.0) or 1.0
        else:
            # every grid cell is crossed; an outside cell reads the positive init density
            ix = grid.width + int(rng.integers(1, 4))
            iy = 0
        more = alpha_grid(m_r, grid, np.vstack([cells.reshape(-1, 2), [[ix, iy]]]))
        add_fail += not (more.alpha < base.alpha and more.log_alpha < base.log_alpha)
        heavy = alpha_grid(2 * m_r, grid, cells)
        light = alpha_grid(m_r, grid, cells)
        mass_fail += not heavy.alpha >= light.alpha
    verdict(10, "adding a positive cell lowers alpha; doubling m_R never lowers it (500 cases)",
            add_fail == 0 and mass_fail == 0, f"{add_fail} add failures, {mass_fail} mass failures")
