"""Closed-form depth recovery for pedestrians by ray / ground-plane intersection.

A pixel defines a world ray ``P = O + t D``. The standing point is where the
ray through the foot pixel meets Z = 0; the head is where the ray through the
box top meets the vertical line above the standing point. Depth of any point
is its camera-frame Z. Pixels inside the box get depths linearly interpolated
by row between the head and standing depths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detection import BBox, Detection
from .geometry import CameraModel, camera_center, world_to_camera

PARALLEL_EPS = 1e-12
DEFAULT_HEIGHT_BOUNDS = (0.5, 2.5)


class RaytraceError(ValueError):
    """Base class; ``category`` is what pipeline summaries count."""

    @property
    def category(self) -> str:
        return type(self).__name__


class RayParallelToGround(RaytraceError):
    pass


class IntersectionBehindCamera(RaytraceError):
    pass


class DegenerateHeadRay(RaytraceError):
    pass


class NegativeHeight(RaytraceError):
    pass


class ImplausibleHeight(RaytraceError):
    pass


class StandingOutsideImage(RaytraceError):
    pass


class DegenerateBox(RaytraceError):
    pass


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if not np.linalg.norm(d) > 0:
            raise ValueError("ray direction must be non-zero")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True, eq=False)
class PedestrianAnchor:
    standing_world: np.ndarray
    head_world: np.ndarray
    standing_depth: float
    head_depth: float

    @property
    def height(self) -> float:
        return float(self.head_world[2])

    @property
    def position(self) -> np.ndarray:
        return self.standing_world[:2].copy()


@dataclass(frozen=True, eq=False)
class DepthPatch:
    """Depth for every pixel of a box lattice; ``us``/``vs`` are the lattice coordinates."""

    box: BBox
    us: np.ndarray
    vs: np.ndarray
    depth: np.ndarray  # (len(vs), len(us))

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def pixel_ray(cam: CameraModel, px) -> Ray:
    """Ray from the camera center through pixel ``px``; direction is ``R^T [x_n, y_n, 1]``."""
    u, v = float(px[0]), float(px[1])
    i = cam.intrinsics
    d_cam = np.array([(u - i.cx) / i.fx, (v - i.cy) / i.fy, 1.0])
    return Ray(camera_center(cam), cam.R.T @ d_cam)


def intersect_ground(ray: Ray) -> np.ndarray:
    O, D = ray.origin, ray.direction
    if abs(D[2]) < PARALLEL_EPS:
        raise RayParallelToGround("ray is parallel to the ground plane")
    t = -O[2] / D[2]
    if t <= 0:
        raise IntersectionBehindCamera(f"ground intersection behind the camera (t={t:.6g})")
    P = O + t * D
    P[2] = 0.0
    return P


def solve_head(ray_head: Ray, standing) -> np.ndarray:
    """Point on ``ray_head`` sharing X (or Y) with ``standing``.

    Uses whichever of D_x / D_y is larger in magnitude. The returned point's
    X and Y are copied from ``standing`` so the pair is exactly vertical.
    """
    O, D = ray_head.origin, ray_head.direction
    standing = np.asarray(standing, dtype=np.float64)
    if max(abs(D[0]), abs(D[1])) < PARALLEL_EPS:
        raise DegenerateHeadRay("head ray is vertical; cannot substitute X or Y")
    axis = 0 if abs(D[0]) >= abs(D[1]) else 1
    t = (standing[axis] - O[axis]) / D[axis]
    if t <= 0:
        raise NegativeHeight(f"head lies behind the camera (t={t:.6g})")
    z = O[2] + t * D[2]
    if z <= 0:
        raise NegativeHeight(f"recovered head height {z:.6g} m is not positive")
    return np.array([standing[0], standing[1], z])


def head_pixel(cam: CameraModel, standing, v_top: float) -> tuple[float, float]:
    """Pixel on row ``v_top`` lying on the image of the vertical through ``standing``.

    The vertical line projects to the line joining the standing pixel and the
    vertical vanishing point; intersecting it with the row keeps the head ray
    coplanar with the vertical so the substitution in ``solve_head`` is exact.
    """
    K = cam.intrinsics.K
    s_cam = world_to_camera(cam, standing)
    foot = K @ s_cam
    vanish = K @ cam.R[:, 2]  # image of the world up direction (homogeneous, may be at infinity)
    line = np.cross(foot, vanish)
    row = np.array([0.0, 1.0, -v_top])
    p = np.cross(line, row)
    if abs(p[2]) < 1e-15 * max(1.0, np.abs(p).max()):
        # image of the vertical is parallel to image rows; fall back to the foot column
        return float(foot[0] / foot[2]), float(v_top)
    return float(p[0] / p[2]), float(v_top)


def standing_pixel(det: Detection, mode: str = "keypoint") -> tuple[float, float]:
    if mode == "keypoint":
        return det.standing_px
    if mode == "bottom-center":
        return det.box.bottom_center
    raise ValueError(f"unknown standing-point mode {mode!r}")


def anchor_at(cam: CameraModel, standing_world, head_world) -> PedestrianAnchor:
    depths = world_to_camera(cam, np.stack([standing_world, head_world]))[:, 2]
    return PedestrianAnchor(
        np.asarray(standing_world, dtype=np.float64),
        np.asarray(head_world, dtype=np.float64),
        float(depths[0]),
        float(depths[1]),
    )


def anchor_from_detection(
    cam: CameraModel,
    det: Detection,
    mode: str = "keypoint",
    height_bounds: tuple[float, float] = DEFAULT_HEIGHT_BOUNDS,
    fixed_height: float | None = None,
) -> PedestrianAnchor:
    """Standing point, head, and their depths for one detection.

    ``fixed_height`` replaces the recovered height (the bound check is then
    skipped); used by the fixed-height ablation.
    """
    spx = standing_pixel(det, mode)
    if not cam.in_image(spx):
        raise StandingOutsideImage(f"standing pixel {spx} outside the {cam.image_size} image")
    if det.box.v_min < 0:
        raise DegenerateBox("box top above the image")
    standing = intersect_ground(pixel_ray(cam, spx))
    if fixed_height is not None:
        head = np.array([standing[0], standing[1], float(fixed_height)])
    else:
        head = solve_head(pixel_ray(cam, head_pixel(cam, standing, det.box.v_min)), standing)
        lo, hi = height_bounds
        if not lo <= head[2] <= hi:
            raise ImplausibleHeight(f"recovered height {head[2]:.3f} m outside [{lo}, {hi}]")
    anchor = anchor_at(cam, standing, head)
    if anchor.standing_depth <= 0 or anchor.head_depth <= 0:
        raise IntersectionBehindCamera("anchor depth is not positive")
    return anchor


def interpolate_box_depth(anchor: PedestrianAnchor, box: BBox) -> DepthPatch:
    """Row-wise linear depth from head (top row) to standing point (bottom row)."""
    rows, cols = box.pixel_shape()
    if box.height < 2 or rows < 2:
        raise DegenerateBox(f"box height {box.height:.3f} px < 2")
    vs = np.linspace(box.v_min, box.v_max, rows)
    us = np.linspace(box.u_min, box.u_max, cols) if cols > 1 else np.array([0.5 * (box.u_min + box.u_max)])
    frac = (vs - box.v_min) / (box.v_max - box.v_min)
    frac[-1] = 1.0
    row_depth = anchor.head_depth + frac * (anchor.standing_depth - anchor.head_depth)
    row_depth[0], row_depth[-1] = anchor.head_depth, anchor.standing_depth
    depth = np.repeat(row_depth[:, None], cols, axis=1)
    return DepthPatch(box, us, vs, depth)
