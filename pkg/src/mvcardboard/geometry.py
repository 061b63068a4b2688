"""Pinhole camera model and world / camera / pixel transforms.

Conventions: world frame is Z-up with the ground plane at Z = 0. Extrinsics
map world to camera, ``X_cam = R @ X_world + T``. Camera frame is the usual
OpenCV one (x right, y down, z forward). No lens distortion.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ORTHO_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid camera parameters."""


class PointBehindCamera(GeometryError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Extrinsics:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(T)):
            raise GeometryError("extrinsics must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise GeometryError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise GeometryError("rotation matrix must have det +1")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)


@dataclass(frozen=True, eq=False)
class CameraModel:
    intrinsics: Intrinsics
    extrinsics: Extrinsics
    image_size: tuple[int, int]  # (width, height)
    id: str = "cam0"
    center: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise GeometryError(f"image size must be positive, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(w), int(h)))
        O = -self.extrinsics.R.T @ self.extrinsics.T
        if not O[2] > 0:
            raise GeometryError(f"camera {self.id} must be above the ground plane (O_z={O[2]:.6g})")
        O.setflags(write=False)
        object.__setattr__(self, "center", O)

    @property
    def R(self) -> np.ndarray:
        return self.extrinsics.R

    @property
    def T(self) -> np.ndarray:
        return self.extrinsics.T

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def in_image(self, px) -> np.ndarray | bool:
        px = np.asarray(px, dtype=np.float64)
        u, v = px[..., 0], px[..., 1]
        return (u >= 0) & (u <= self.width) & (v >= 0) & (v <= self.height)

    def to_dict(self) -> dict:
        i = self.intrinsics
        return {
            "id": self.id,
            "width": self.width,
            "height": self.height,
            "fx": i.fx,
            "fy": i.fy,
            "cx": i.cx,
            "cy": i.cy,
            "R": [float(x) for x in self.R.ravel()],
            "T": [float(x) for x in self.T],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        try:
            return cls(
                Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"])),
                Extrinsics(np.asarray(d["R"], dtype=np.float64), np.asarray(d["T"], dtype=np.float64)),
                (int(d["width"]), int(d["height"])),
                str(d["id"]),
            )
        except (KeyError, TypeError) as e:
            raise GeometryError(f"malformed camera entry: {e}") from e


def camera_center(cam: CameraModel | Extrinsics) -> np.ndarray:
    """World position of the optical center, ``-R^T T``."""
    if isinstance(cam, Extrinsics):
        return -cam.R.T @ cam.T
    return cam.center.copy()


def world_to_camera(cam: CameraModel, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return p @ cam.R.T + cam.T


def camera_to_world(cam: CameraModel, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    return (p - cam.T) @ cam.R


def project(cam: CameraModel, p) -> np.ndarray:
    """Project world point(s) of shape (..., 3) to pixels (..., 2).

    Raises PointBehindCamera if any point has camera-frame Z <= 0.
    """
    pc = world_to_camera(cam, p)
    z = pc[..., 2]
    if np.any(z <= 0):
        raise PointBehindCamera("point is not in front of the camera")
    i = cam.intrinsics
    return np.stack([i.fx * pc[..., 0] / z + i.cx, i.fy * pc[..., 1] / z + i.cy], axis=-1)


def back_project(cam: CameraModel, px, depth) -> np.ndarray:
    """Camera-frame point(s) for pixel(s) ``px`` at camera-frame depth ``depth``."""
    px = np.asarray(px, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    i = cam.intrinsics
    x = (px[..., 0] - i.cx) * depth / i.fx
    y = (px[..., 1] - i.cy) * depth / i.fy
    return np.stack([x, y, np.broadcast_to(depth, x.shape)], axis=-1)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World->camera (R, T) for a camera at ``eye`` looking at ``target``, zero roll."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise GeometryError("viewing direction is parallel to the up vector")
    right /= n
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return R, -R @ eye


def make_camera(eye, target, fx=1000.0, fy=None, image_size=(1920, 1080), cam_id="cam0") -> CameraModel:
    w, h = image_size
    R, T = look_at(eye, target)
    return CameraModel(
        Intrinsics(fx, fx if fy is None else fy, w / 2.0, h / 2.0),
        Extrinsics(R, T),
        (w, h),
        cam_id,
    )


def load_calibration(path) -> list[CameraModel]:
    """Read a JSON calibration file: a list of camera objects or ``{"cameras": [...]}``."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = data.get("cameras", data)
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise GeometryError("calibration file must hold a list of cameras")
    return [CameraModel.from_dict(d) for d in data]


def save_calibration(cams, path) -> None:
    Path(path).write_text(json.dumps({"cameras": [c.to_dict() for c in cams]}, indent=2) + "\n")
