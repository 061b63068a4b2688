import numpy as np
import pytest

from mvcardboard.bev import WILDTRACK
from mvcardboard.cardboard import (
    CardboardCloud,
    DimensionMismatch,
    GroundRect,
    build_cardboard,
    build_ground_plane_cloud,
    read_cloud_csv,
    sample_cloud,
    write_cloud_csv,
)
from mvcardboard.detection import BBox, Detection
from mvcardboard.geometry import make_camera, project
from mvcardboard.raytrace import (
    PedestrianAnchor,
    RaytraceError,
    anchor_from_detection,
    interpolate_box_depth,
)
from mvcardboard.simulator import NoiseModel, SceneConfig, rig_preset, simulate


def usable(cams, scene):
    for cam in cams:
        for det in scene.detections[cam.id]:
            try:
                a = anchor_from_detection(cam, det)
            except RaytraceError:
                continue
            yield cam, det, a


@pytest.fixture(scope="module")
def zero_scene():
    cams = rig_preset("wildtrack_like")
    return cams, simulate(SceneConfig(WILDTRACK, 10, seed=5), cams, NoiseModel.zero())


def test_bottom_row_on_ground(zero_scene):
    cams, scene = zero_scene
    for cam, det, a in list(usable(cams, scene))[:20]:
        patch = interpolate_box_depth(a, det.box)
        cloud = build_cardboard(cam, det, patch, stride=1, anchor=a)
        rows, cols = patch.shape
        bottom = cloud.xyz.reshape(rows, cols, 3)[-1]
        assert np.max(np.abs(bottom[:, 2])) < 1e-6


def test_points_reproject_into_box(zero_scene):
    cams, scene = zero_scene
    for cam, det, a in list(usable(cams, scene))[:20]:
        cloud = build_cardboard(cam, det, interpolate_box_depth(a, det.box), anchor=a)
        px = project(cam, cloud.xyz)
        b = det.box
        assert np.all(px[:, 0] >= b.u_min - 0.5) and np.all(px[:, 0] <= b.u_max + 0.5)
        assert np.all(px[:, 1] >= b.v_min - 0.5) and np.all(px[:, 1] <= b.v_max + 0.5)


def flat_patch_cloud(w, h, stride, color=None):
    cam = make_camera((0, -10, 5), (0, 5, 0))
    box = BBox(900, 400, 900 + w, 400 + h)
    a = PedestrianAnchor(np.zeros(3), np.array([0, 0, 1.7]), 10.0, 9.0)
    det = Detection("c", box, (900 + w / 2, 400 + h), color_patch=color)
    return build_cardboard(cam, det, interpolate_box_depth(a, box), stride=stride)


def test_point_count_with_stride():
    assert len(flat_patch_cloud(10, 20, 2)) == 50


def test_gray_fallback_and_patch_colors():
    assert np.all(flat_patch_cloud(10, 20, 1).rgb == 0.5)
    patch = np.zeros((20, 10, 3))
    patch[..., 0] = np.linspace(0, 1, 10)
    cloud = flat_patch_cloud(10, 20, 1, color=patch)
    np.testing.assert_allclose(cloud.rgb[:10, 0], np.linspace(0, 1, 10))
    with pytest.raises(DimensionMismatch):
        flat_patch_cloud(10, 20, 1, color=np.zeros((5, 5, 3)))


def test_sampling():
    pts = np.arange(600, dtype=float).reshape(100, 6)
    cloud = CardboardCloud(pts, "c")
    assert sample_cloud(cloud, 1.0, 0) is cloud
    half = sample_cloud(cloud, 0.5, 7)
    assert len(half) == 50
    rows = {tuple(r) for r in pts}
    assert all(tuple(r) in rows for r in half.points)
    np.testing.assert_array_equal(half.points, sample_cloud(cloud, 0.5, 7).points)
    assert len(sample_cloud(cloud, 0.0, 1)) == 0
    with pytest.raises(ValueError):
        sample_cloud(cloud, 1.5, 0)


def test_ground_plane_lattice():
    g = build_ground_plane_cloud(GroundRect(0, 0, 12, 36), 0.1)
    assert len(g) == 121 * 361
    assert np.all(g.xyz[:, 2] == 0)
    assert g.camera_id is None


def test_cloud_csv_round_trip(tmp_path):
    c = flat_patch_cloud(10, 20, 2)
    path = tmp_path / "cloud.csv"
    assert write_cloud_csv([c, c], path) == 100
    assert path.read_text().splitlines()[0] == "x,y,z,r,g,b"
    np.testing.assert_allclose(read_cloud_csv(path), np.vstack([c.points, c.points]), atol=1e-6)
