import cv2
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vegtrav.fusion import (
    AugmentedCloud,
    AugmentedPoint,
    CameraIntrinsics,
    LidarPoint,
    RigidTransform,
    SpectralCube,
    augment_cloud,
    project_point,
    project_points,
)
from vegtrav.spectral import SpectralCalibration

WL = np.array([550.0, 650.0, 810.0])
INTR = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)


def rotation(rx, ry, rz):
    return cv2.Rodrigues(np.array([rx, ry, rz], dtype=np.float64))[0]


def test_optical_axis_hits_principal_point():
    assert project_point(INTR, RigidTransform.identity(), LidarPoint(0, 0, 1)) == (50.0, 50.0)


def test_point_behind_camera():
    assert project_point(INTR, RigidTransform.identity(), LidarPoint(0, 0, -1)) is None


def test_pinhole_hand_value():
    assert project_point(INTR, RigidTransform.identity(), LidarPoint(0.1, 0, 1)) == pytest.approx((60.0, 50.0))


def test_intrinsics_invariants():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 1.0, 0, 0, 10, 10)
    with pytest.raises(ValueError):
        CameraIntrinsics(1.0, 1.0, 10, 0, 10, 10)


def test_rigid_transform_invariants():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))


def test_transform_algebra(rng):
    a = RigidTransform(rotation(0.3, -0.2, 1.0), np.array([1.0, 2.0, -0.5]))
    b = RigidTransform(rotation(-0.7, 0.1, 0.2), np.array([0.0, -1.0, 3.0]))
    p = rng.normal(size=(10, 3))
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)
    np.testing.assert_allclose(a.inverse().apply(a.apply(p)), p, atol=1e-12)
    np.testing.assert_allclose(RigidTransform.from_matrix(a.as_matrix()).apply(p), a.apply(p))


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3),
       st.floats(-0.05, 0.05), st.floats(-0.01, 0.01), st.floats(-0.01, 0.01), st.floats(-0.01, 0.01))
def test_distortion_matches_opencv(rx, ry, k1, k2, p1, p2, k3):
    intr = CameraIntrinsics(420.0, 410.0, 320.0, 240.0, 640, 480, (k1, k2, p1, p2, k3))
    extr = RigidTransform(rotation(rx, ry, 0.1), np.array([0.1, -0.2, 0.3]))
    pts = np.random.default_rng(1).uniform([-1, -1, 2], [1, 1, 6], (20, 3))
    uv, _ = project_points(intr, extr, pts)
    ref, _ = cv2.projectPoints(pts, cv2.Rodrigues(extr.rotation)[0], extr.translation,
                               intr.matrix, np.asarray(intr.coefficients))
    np.testing.assert_allclose(uv, ref.reshape(-1, 2), atol=1e-6)


@given(st.floats(0, 99), st.floats(0, 99), st.floats(0.2, 50))
def test_backprojection_round_trip(u, v, depth):
    x = (u - INTR.cx) / INTR.fx * depth
    y = (v - INTR.cy) / INTR.fy * depth
    got = project_point(INTR, RigidTransform.identity(), LidarPoint(x, y, depth))
    assert got == pytest.approx((u, v), abs=1e-6)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 10))
def test_identity_composition_is_neutral(x, y, z):
    extr = RigidTransform(rotation(0.1, 0.2, 0.3), np.array([0.0, 0.1, 0.5]))
    p = LidarPoint(x, y, z)
    ident = RigidTransform.identity()
    assert project_point(INTR, extr.compose(ident), p) == project_point(INTR, extr, p)
    assert project_point(INTR, ident.compose(extr), p) == project_point(INTR, extr, p)


def uniform_cube(value):
    return SpectralCube(WL, np.full((100, 100, WL.size), value))


def test_empty_cloud():
    out = augment_cloud(np.zeros((0, 3)), uniform_cube(0.3), INTR, RigidTransform.identity())
    assert len(out) == 0


def test_uniform_cube_single_point():
    out = augment_cloud([LidarPoint(0, 0, 1)], uniform_cube(0.3), INTR, RigidTransform.identity())
    (pt,) = list(out)
    assert isinstance(pt, AugmentedPoint)
    np.testing.assert_array_equal(pt.reflectance.values, [0.3, 0.3, 0.3])


def test_point_behind_camera_has_no_spectrum():
    pts = [LidarPoint(0, 0, 1), LidarPoint(0, 0, -1)]
    out = augment_cloud(pts, uniform_cube(0.3), INTR, RigidTransform.identity())
    assert len(out) == 2
    expected = [project_point(INTR, RigidTransform.identity(), p) is not None for p in pts]
    assert list(out.has_reflectance) == expected == [True, False]
    assert out[1].reflectance is None and out[1].plants_probability is None


def test_nearest_pixel_sampling_and_calibration():
    data = np.zeros((100, 100, WL.size))
    data[50, 60] = [0.2, 0.4, 0.8]
    cube = SpectralCube(WL, data)
    # (0.104, 0.004, 1) projects to (60.4, 50.4): nearest pixel (60, 50)
    cal = SpectralCalibration(np.diag([0.5, 0.5, 0.5]), WL)
    out = augment_cloud(np.array([[0.104, 0.004, 1.0]]), cube, INTR, RigidTransform.identity(), cal)
    np.testing.assert_allclose(out.reflectance[0], [0.1, 0.2, 0.4])


def test_cube_size_mismatch():
    cube = SpectralCube(WL, np.zeros((10, 10, WL.size)))
    with pytest.raises(ValueError, match="intrinsics expect 100x100"):
        augment_cloud(np.zeros((1, 3)), cube, INTR, RigidTransform.identity())


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)), max_size=30))
def test_output_length_equals_input(points):
    arr = np.array(points, dtype=float).reshape(-1, 3)
    assert len(augment_cloud(arr, uniform_cube(0.5), INTR, RigidTransform.identity())) == len(arr)


def test_augmented_invariants():
    with pytest.raises(ValueError):
        AugmentedPoint(np.zeros(3), None, plants_probability=0.5)
    with pytest.raises(ValueError):
        AugmentedCloud(np.zeros((1, 3)), WL, np.zeros((1, 3)), mass_density=[-1.0])


def test_cloud_concatenate_and_transform():
    a = AugmentedCloud(np.ones((2, 3)), WL, np.full((2, 3), 0.1))
    b = AugmentedCloud(np.zeros((1, 3)), WL, np.full((1, 3), np.nan))
    both = AugmentedCloud.concatenate([a, b])
    assert len(both) == 3 and list(both.has_reflectance) == [True, True, False]
    moved = both.transformed(RigidTransform(np.eye(3), np.array([1.0, 0, 0])))
    assert moved.frame == "world"
    np.testing.assert_array_equal(moved.positions[:, 0], [2, 2, 1])
