import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvcardboard.geometry import (
    CameraModel,
    Extrinsics,
    GeometryError,
    Intrinsics,
    PointBehindCamera,
    back_project,
    camera_center,
    camera_to_world,
    load_calibration,
    project,
    save_calibration,
    world_to_camera,
)

from .conftest import random_camera, random_rotation


def cam_with(R, T, fx=1000.0, fy=1000.0, cx=960.0, cy=540.0):
    return CameraModel(Intrinsics(fx, fy, cx, cy), Extrinsics(R, T), (1920, 1080), "c")


def test_center_pure_translation():
    cam = cam_with(np.eye(3), [0.0, 0.0, -5.0])
    np.testing.assert_array_equal(camera_center(cam), [0.0, 0.0, 5.0])


def test_identity_extrinsics_rejected_at_ground_level():
    # R = I, T = 0 puts the center at the origin, on the ground plane
    with pytest.raises(GeometryError):
        cam_with(np.eye(3), [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(camera_center(Extrinsics(np.eye(3), np.zeros(3))), [0.0, 0.0, 0.0])


def test_center_satisfies_forward_map(rng):
    for _ in range(200):
        R = random_rotation(rng)
        O = np.r_[rng.uniform(-20, 20, 2), rng.uniform(0.5, 20)]
        T = -R @ O + 0.0
        cam = cam_with(R, T)
        c = camera_center(cam)
        assert np.max(np.abs(R @ c + T)) < 1e-12


def test_world_to_camera_identity():
    cam = cam_with(np.eye(3), [0.0, 0.0, -5.0])
    np.testing.assert_allclose(world_to_camera(cam, [1.0, 2.0, 3.0]), [1.0, 2.0, -2.0])


def test_center_maps_to_origin(rng):
    for _ in range(50):
        cam = random_camera(rng)
        assert np.max(np.abs(world_to_camera(cam, camera_center(cam)))) < 1e-12


def test_round_trip_world_camera(rng):
    for _ in range(50):
        cam = random_camera(rng)
        p = rng.uniform(-50, 50, (100, 3))
        assert np.max(np.abs(camera_to_world(cam, world_to_camera(cam, p)) - p)) < 1e-12
        assert np.max(np.abs(world_to_camera(cam, camera_to_world(cam, p)) - p)) < 1e-12


def test_project_principal_point(simple_cam):
    axis_point = camera_center(simple_cam) + 7.0 * simple_cam.R[2]
    np.testing.assert_allclose(project(simple_cam, axis_point), [960.0, 540.0], atol=1e-9)


def test_project_analytic():
    # R = I with the camera 5 m up: world point = camera point + center
    cam = cam_with(np.eye(3), [0.0, 0.0, -5.0])
    p = camera_to_world(cam, [0.1, 0.0, 1.0])
    np.testing.assert_allclose(project(cam, p), [1060.0, 540.0], atol=1e-12)


def test_project_behind_camera(simple_cam):
    behind = camera_center(simple_cam) - simple_cam.R[2]
    with pytest.raises(PointBehindCamera):
        project(simple_cam, behind)


@settings(max_examples=200, deadline=None)
@given(
    u=st.floats(0, 1920),
    v=st.floats(0, 1080),
    z=st.floats(0.5, 100),
    seed=st.integers(0, 2**32 - 1),
)
def test_project_back_project_round_trip(u, v, z, seed):
    cam = random_camera(np.random.default_rng(seed))
    pw = camera_to_world(cam, back_project(cam, (u, v), z))
    np.testing.assert_allclose(project(cam, pw), [u, v], rtol=0, atol=1e-9)


def test_rejects_bad_rotation():
    with pytest.raises(GeometryError):
        Extrinsics(np.diag([1.0, 1.0, 1.01]), np.zeros(3))
    with pytest.raises(GeometryError):
        Extrinsics(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_rejects_bad_intrinsics():
    with pytest.raises(GeometryError):
        Intrinsics(0.0, 1.0, 0.0, 0.0)
    with pytest.raises(GeometryError):
        CameraModel(Intrinsics(1, 1, 0, 0), Extrinsics(np.eye(3), [0, 0, -1]), (0, 10))


def test_calibration_file_round_trip(tmp_path, rng):
    cams = [random_camera(rng, f"c{k}") for k in range(3)]
    path = tmp_path / "calib.json"
    save_calibration(cams, path)
    loaded = load_calibration(path)
    assert [c.id for c in loaded] == ["c0", "c1", "c2"]
    for a, b in zip(cams, loaded):
        np.testing.assert_array_equal(a.R, b.R)
        np.testing.assert_array_equal(a.T, b.T)
        assert a.intrinsics == b.intrinsics
        assert a.image_size == b.image_size


def test_calibration_loader_validates_orthonormality(tmp_path):
    bad = {"id": "x", "width": 10, "height": 10, "fx": 1, "fy": 1, "cx": 5, "cy": 5,
           "R": [1, 0, 0, 0, 1, 0, 0, 0, 2], "T": [0, 0, -1]}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps([bad]))
    with pytest.raises(GeometryError):
        load_calibration(path)
