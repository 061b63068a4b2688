"""Cardboard point clouds: every box pixel lifted to 3D at its interpolated depth."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detection import BBox, Detection
from .geometry import CameraModel, back_project, camera_to_world
from .raytrace import DepthPatch, PedestrianAnchor

NEUTRAL_GRAY = (0.5, 0.5, 0.5)


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GroundRect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"rectangle is not well ordered: {self}")

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


@dataclass(frozen=True, eq=False)
class CardboardCloud:
    """Points as an (N, 6) array of x, y, z, r, g, b."""

    points: np.ndarray
    camera_id: str | None = None
    anchor: PedestrianAnchor | None = None
    pedestrian_id: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 6)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def rgb(self) -> np.ndarray:
        return self.points[:, 3:]


def default_stride(box: BBox) -> int:
    return 1 if box.height <= 200 else 2


def _colors(det: Detection, rows: np.ndarray, cols: np.ndarray, shape) -> np.ndarray:
    n = len(rows) * len(cols)
    patch = det.color_patch
    if patch is None:
        return np.tile(NEUTRAL_GRAY, (n, 1))
    if patch.ndim == 1:
        return np.tile(patch, (n, 1))
    if patch.shape[:2] != shape:
        raise DimensionMismatch(f"color patch {patch.shape[:2]} does not match box lattice {shape}")
    return patch[np.ix_(rows, cols)].reshape(n, 3)


def build_cardboard(
    cam: CameraModel,
    det: Detection,
    patch: DepthPatch,
    stride: int | None = None,
    anchor: PedestrianAnchor | None = None,
) -> CardboardCloud:
    """Back-project every ``stride``-th box pixel at its patch depth into the world."""
    if patch.box != det.box:
        raise DimensionMismatch("depth patch was computed for a different box")
    if patch.depth.shape != (len(patch.vs), len(patch.us)):
        raise DimensionMismatch(f"depth {patch.depth.shape} vs lattice {(len(patch.vs), len(patch.us))}")
    stride = default_stride(det.box) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = np.arange(0, len(patch.vs), stride)
    cols = np.arange(0, len(patch.us), stride)
    uu, vv = np.meshgrid(patch.us[cols], patch.vs[rows])
    depth = patch.depth[np.ix_(rows, cols)]
    px = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    world = camera_to_world(cam, back_project(cam, px, depth.ravel()))
    rgb = _colors(det, rows, cols, patch.depth.shape)
    return CardboardCloud(np.hstack([world, rgb]), det.camera_id, anchor, det.pedestrian_id)


def sample_cloud(cloud: CardboardCloud, rate: float, seed) -> CardboardCloud:
    """Keep ``round(rate * N)`` points uniformly without replacement (original order kept)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"sample rate {rate} outside [0, 1]")
    n = len(cloud)
    k = int(np.floor(rate * n + 0.5))
    if k >= n:
        return cloud
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=k, replace=False))
    return CardboardCloud(cloud.points[idx], cloud.camera_id, cloud.anchor, cloud.pedestrian_id)


def build_ground_plane_cloud(bounds: GroundRect, spacing: float) -> CardboardCloud:
    """Regular gray z = 0 lattice covering ``bounds`` (endpoints included)."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    nx = int(np.floor((bounds.x_max - bounds.x_min) / spacing + 1e-9)) + 1
    ny = int(np.floor((bounds.y_max - bounds.y_min) / spacing + 1e-9)) + 1
    xs = bounds.x_min + spacing * np.arange(nx)
    ys = bounds.y_min + spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.zeros((nx * ny, 6))
    pts[:, 0], pts[:, 1] = gx.ravel(), gy.ravel()
    pts[:, 3:] = NEUTRAL_GRAY
    return CardboardCloud(pts)


def write_cloud_csv(clouds, path) -> int:
    """Dump clouds to one CSV (header x,y,z,r,g,b); returns the row count."""
    n = 0
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "r", "g", "b"])
        for c in clouds:
            for row in c.points:
                w.writerow([f"{v:.6f}" for v in row])
            n += len(c)
    return n


def read_cloud_csv(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2).reshape(-1, 6)
