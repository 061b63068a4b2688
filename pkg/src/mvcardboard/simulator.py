"""Synthetic multiview scenes with exact pinhole ground truth.

Pedestrians are thin upright rectangles (body_width x height) standing on
Z = 0. In each camera the rectangle is turned to lie along the camera's
horizontal image axis, so with a zero-roll camera its bottom edge projects
onto the standing-point row and its top edge onto the head row.
"""
from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bev import GridSpec, grid_preset
from .detection import BBox, Detection, InvalidDetection
from .geometry import CameraModel, make_camera, world_to_camera

FIXED_HEIGHT = 1.8
NEAR_PLANE = 0.05
# "image": rectangle parallel to the image plane's horizontal axis (box top and
# bottom rows are exact head / foot rows). "camera": rectangle normal points at
# the camera center in XY (box rows are only approximately head / foot rows).
BODY_FACINGS = ("image", "camera")


class PlacementInfeasible(RuntimeError):
    pass


class UnknownPreset(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    box_sigma_px: float = 2.0
    standing_sigma_px: float = 2.0
    miss_rate: float = 0.05
    false_positive_rate: float = 0.1
    occlusion_iou_threshold: float = 1.0  # 1.0 disables occlusion dropout

    def __post_init__(self):
        for name in ("miss_rate", "false_positive_rate", "occlusion_iou_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.box_sigma_px < 0 or self.standing_sigma_px < 0:
            raise ValueError("noise sigmas must be non-negative")

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class SceneConfig:
    grid: GridSpec
    n_pedestrians: int = 20
    height_range: tuple[float, float] = (1.6, 1.9)
    body_width: float = 0.4
    min_separation: float = 0.6
    seed: int = 0
    body_facing: str = "image"

    def __post_init__(self):
        if self.body_facing not in BODY_FACINGS:
            raise ValueError(f"body_facing must be one of {BODY_FACINGS}")
        lo, hi = self.height_range
        if self.n_pedestrians < 0:
            raise ValueError("n_pedestrians must be >= 0")
        if not 0 < lo <= hi < 3:
            raise ValueError(f"height_range {self.height_range} must lie in (0, 3)")
        if not self.min_separation > 0 or not self.body_width > 0:
            raise ValueError("min_separation and body_width must be positive")


@dataclass(frozen=True)
class Pedestrian:
    id: int
    x: float
    y: float
    height: float
    color: tuple[float, float, float]

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0])


@dataclass
class Scene:
    config: SceneConfig
    pedestrians: list[Pedestrian]
    detections: dict[str, list[Detection]] = field(default_factory=dict)
    noise: NoiseModel | None = None

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.pedestrians]).reshape(-1, 3)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *stream]))


def place_pedestrians(cfg: SceneConfig) -> Scene:
    """Uniform rejection sampling of positions at least ``min_separation`` apart."""
    rng = _rng(cfg.seed, 0)
    ext = cfg.grid.extent
    pts: list[tuple[float, float]] = []
    budget = 10_000 * max(cfg.n_pedestrians, 1)
    tries = 0
    while len(pts) < cfg.n_pedestrians:
        if tries >= budget:
            raise PlacementInfeasible(
                f"placed {len(pts)}/{cfg.n_pedestrians} pedestrians after {tries} draws"
            )
        tries += 1
        x = rng.uniform(ext.x_min, ext.x_max)
        y = rng.uniform(ext.y_min, ext.y_max)
        if all((x - a) ** 2 + (y - b) ** 2 >= cfg.min_separation**2 for a, b in pts):
            pts.append((x, y))
    heights = rng.uniform(*cfg.height_range, size=cfg.n_pedestrians)
    hue0 = rng.random()
    peds = []
    for k, ((x, y), h) in enumerate(zip(pts, heights)):
        rgb = colorsys.hsv_to_rgb((hue0 + 0.618033988749895 * k) % 1.0, 0.75, 0.85)
        peds.append(Pedestrian(k, float(x), float(y), float(h), tuple(float(c) for c in rgb)))
    return Scene(cfg, peds)


def body_corners(cam: CameraModel, position, height: float, body_width: float, facing: str = "image") -> np.ndarray:
    """World corners (bl, br, tl, tr) of the camera-facing body rectangle."""
    p = np.asarray(position, dtype=np.float64)
    if facing == "camera":
        to_ped = p - cam.center
        right = np.array([-to_ped[1], to_ped[0], 0.0])
    else:
        right = np.array([cam.R[0, 0], cam.R[0, 1], 0.0])
    n = np.linalg.norm(right)
    right = np.array([1.0, 0.0, 0.0]) if n < 1e-12 else right / n
    half = 0.5 * body_width * right
    up = np.array([0.0, 0.0, height])
    return np.stack([p - half, p + half, p - half + up, p + half + up])


def render_box(cam: CameraModel, position, height: float, body_width: float, facing: str = "image"):
    """(clipped box, standing pixel, depth) or None if the body is not visible."""
    corners = body_corners(cam, position, height, body_width, facing)
    pc = world_to_camera(cam, np.vstack([corners, np.asarray(position, dtype=np.float64)]))
    if np.any(pc[:, 2] <= NEAR_PLANE):
        return None
    i = cam.intrinsics
    u = i.fx * pc[:, 0] / pc[:, 2] + i.cx
    v = i.fy * pc[:, 1] / pc[:, 2] + i.cy
    u0, u1 = max(u[:4].min(), 0.0), min(u[:4].max(), float(cam.width))
    v0, v1 = max(v[:4].min(), 0.0), min(v[:4].max(), float(cam.height))
    if u1 - u0 < 1.0 or v1 - v0 < 2.0:
        return None
    return (u0, v0, u1, v1), (float(u[4]), float(v[4])), float(pc[4, 2])


def _noisy_detection(cam, raw, noise, box_eps, stand_eps, conf, color, ped_id):
    (u0, v0, u1, v1), (su, sv), _ = raw
    u0, v0, u1, v1 = (
        u0 + noise.box_sigma_px * box_eps[0],
        v0 + noise.box_sigma_px * box_eps[1],
        u1 + noise.box_sigma_px * box_eps[2],
        v1 + noise.box_sigma_px * box_eps[3],
    )
    u0, u1 = max(u0, 0.0), min(u1, float(cam.width))
    v0, v1 = max(v0, 0.0), min(v1, float(cam.height))
    su += noise.standing_sigma_px * stand_eps[0]
    sv += noise.standing_sigma_px * stand_eps[1]
    try:
        return Detection(cam.id, BBox(u0, v0, u1, v1), (su, sv), conf, np.asarray(color), ped_id)
    except InvalidDetection:
        return None


def render_detections(scene: Scene, cams, noise: NoiseModel = NoiseModel(), seed: int | None = None) -> Scene:
    """Fill ``scene.detections`` for every camera; one RNG stream per camera."""
    cfg = scene.config
    seed = cfg.seed if seed is None else seed
    peds = scene.pedestrians
    n = len(peds)
    out: dict[str, list[Detection]] = {}
    for ci, cam in enumerate(cams):
        rng = _rng(seed, 1, ci)
        miss = rng.random(n)
        box_eps = rng.standard_normal((n, 4))
        stand_eps = rng.standard_normal((n, 2))
        conf = rng.uniform(0.6, 1.0, n)
        fp_draw = rng.random()
        fp_xy = rng.random(2)
        fp_h = rng.uniform(*cfg.height_range)
        fp_eps = rng.standard_normal(6)
        fp_conf = rng.uniform(0.3, 0.7)
        fp_color = rng.random(3)

        visible = []
        for k, p in enumerate(peds):
            raw = render_box(cam, p.position, p.height, cfg.body_width, cfg.body_facing)
            if raw is not None:
                visible.append((raw[2], k, raw))
        visible.sort(key=lambda t: (t[0], t[1]))
        kept: list[tuple[int, tuple]] = []
        for _, k, raw in visible:
            if noise.occlusion_iou_threshold < 1.0:
                box = BBox(*raw[0])
                if any(box.iou(BBox(*r[0])) > noise.occlusion_iou_threshold for _, r in kept):
                    continue
            kept.append((k, raw))
        dets = []
        for k, raw in sorted(kept, key=lambda t: t[0]):
            if miss[k] < noise.miss_rate:
                continue
            d = _noisy_detection(cam, raw, noise, box_eps[k], stand_eps[k], float(conf[k]), peds[k].color, peds[k].id)
            if d is not None:
                dets.append(d)
        if fp_draw < noise.false_positive_rate:
            ext = cfg.grid.extent
            pos = np.array(
                [ext.x_min + fp_xy[0] * (ext.x_max - ext.x_min), ext.y_min + fp_xy[1] * (ext.y_max - ext.y_min), 0.0]
            )
            raw = render_box(cam, pos, fp_h, cfg.body_width, cfg.body_facing)
            if raw is not None:
                d = _noisy_detection(cam, raw, noise, fp_eps[:4], fp_eps[4:], float(fp_conf), fp_color, -1)
                if d is not None:
                    dets.append(d)
        out[cam.id] = dets
    scene.detections = out
    scene.noise = noise
    return scene


def simulate(cfg: SceneConfig, cams, noise: NoiseModel = NoiseModel()) -> Scene:
    return render_detections(place_pedestrians(cfg), cams, noise)


# Camera rigs: eye / look-at pairs on the perimeter of the matching grid preset's area.
_RIGS = {
    "wildtrack_like": {
        "grid": "wildtrack",
        "fx": 1000.0,
        "poses": [
            ((0.0, 0.0, 5.0), (7.0, 12.0, 0.0)),
            ((12.0, 0.0, 5.5), (5.0, 13.0, 0.0)),
            ((0.0, 8.0, 6.0), (10.0, 26.0, 0.0)),
            ((12.0, 28.0, 4.5), (2.0, 10.0, 0.0)),
            ((0.0, 36.0, 5.0), (7.0, 24.0, 0.0)),
            ((12.0, 36.0, 3.5), (5.0, 23.0, 0.0)),
            ((6.0, 0.0, 6.0), (6.0, 16.0, 0.0)),
        ],
    },
    "multiviewx_like": {
        "grid": "multiviewx",
        "fx": 1000.0,
        "poses": [
            ((0.0, 0.0, 1.8), (8.0, 11.5, 0.3)),
            ((16.0, 0.0, 1.8), (8.0, 11.5, 0.3)),
            ((0.0, 23.0, 1.8), (8.0, 11.5, 0.3)),
            ((16.0, 23.0, 1.8), (8.0, 11.5, 0.3)),
            ((0.0, 11.5, 1.8), (10.0, 11.5, 0.3)),
            ((16.0, 11.5, 1.8), (6.0, 11.5, 0.3)),
        ],
    },
}
RIG_PRESETS = tuple(_RIGS)


def rig_preset(name: str) -> list[CameraModel]:
    try:
        rig = _RIGS[name]
    except KeyError:
        raise UnknownPreset(f"unknown rig {name!r}; choose from {list(_RIGS)}") from None
    return [make_camera(eye, tgt, fx=rig["fx"], cam_id=f"C{k + 1}") for k, (eye, tgt) in enumerate(rig["poses"])]


def rig_grid(name: str) -> GridSpec:
    try:
        return grid_preset(_RIGS[name]["grid"])
    except KeyError:
        raise UnknownPreset(f"unknown rig {name!r}") from None


def visibility_fraction(cam: CameraModel, grid: GridSpec) -> float:
    from .bev import coverage_map

    return float(coverage_map([cam], grid).mean())


# Scene files ---------------------------------------------------------------


def _grid_json(g: GridSpec) -> dict:
    return {
        "origin": list(g.origin),
        "cell_size_x": g.cell_size_x,
        "cell_size_y": g.cell_size_y,
        "n_rows": g.n_rows,
        "n_cols": g.n_cols,
    }


def grid_from_json(d: dict) -> GridSpec:
    return GridSpec(tuple(d["origin"]), float(d["cell_size_x"]), float(d["cell_size_y"]), int(d["n_rows"]), int(d["n_cols"]))


def scene_to_json(scene: Scene, cams=None, frame: int = 0) -> dict:
    cfg = scene.config
    d = {
        "frame": frame,
        "config": {
            "grid": _grid_json(cfg.grid),
            "n_pedestrians": cfg.n_pedestrians,
            "height_range": list(cfg.height_range),
            "body_width": cfg.body_width,
            "min_separation": cfg.min_separation,
            "seed": cfg.seed,
            "body_facing": cfg.body_facing,
            "noise": None if scene.noise is None else asdict(scene.noise),
        },
        "pedestrians": [
            {"id": p.id, "x": p.x, "y": p.y, "height": p.height, "color": list(p.color)} for p in scene.pedestrians
        ],
        "detections": {cid: [det.to_json() for det in dets] for cid, dets in scene.detections.items()},
    }
    if cams is not None:
        d["cameras"] = [c.to_dict() for c in cams]
    return d


def write_scene(scene: Scene, path, cams=None, frame: int = 0) -> None:
    Path(path).write_text(json.dumps(scene_to_json(scene, cams, frame), indent=1, sort_keys=True) + "\n")


def read_detections(d: dict) -> dict[str, list[Detection]]:
    """Parse the ``detections`` member of a scene / detection file."""
    dets = d.get("detections")
    if not isinstance(dets, dict):
        raise InvalidDetection("file has no 'detections' object")
    return {str(cid): [Detection.from_json(cid, rec) for rec in recs] for cid, recs in dets.items()}


def read_ground_truth(d: dict) -> np.ndarray:
    peds = d.get("pedestrians", [])
    return np.array([[float(p["x"]), float(p["y"]), 0.0] for p in peds]).reshape(-1, 3)
