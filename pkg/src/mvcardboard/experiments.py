"""Seeded simulate -> pipeline -> eval trials and the ablation sweeps built on them."""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .bev import coverage_map
from .config import PipelineConfig
from .evaluation import evaluate_frame, aggregate
from .geometry import load_calibration
from .pipeline import run_frame
from .simulator import FIXED_HEIGHT, NoiseModel, SceneConfig, rig_preset, simulate

STUDIES = ("standing_point", "sample_rate", "ground_plane", "density", "fixed_height")
SAMPLE_RATES = tuple(round(0.1 * k, 1) for k in range(1, 11))
DENSITIES = (10, 20, 40, 60)
OCCLUSION_IOU = 0.5


@dataclass(frozen=True)
class Trial:
    study: str
    setting: str
    seed: int
    moda: float
    modp: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    points: int
    detections: int
    used: int


def cameras_for(cfg: PipelineConfig):
    if cfg.calibration is not None:
        return load_calibration(cfg.calibration)
    return rig_preset(cfg.rig)


@lru_cache(maxsize=8)
def _coverage(rig: str, grid: str):
    cfg = PipelineConfig(grid=grid, rig=rig)
    return coverage_map(cameras_for(cfg), cfg.grid_spec())


def run_trial(cfg: PipelineConfig, seed: int, study: str = "", setting: str = "") -> Trial:
    cams = cameras_for(cfg)
    scene_cfg = SceneConfig(cfg.grid_spec(), cfg.n_pedestrians, seed=seed, body_facing=cfg.body_facing)
    scene = simulate(scene_cfg, cams, cfg.noise)
    cov = _coverage(cfg.rig, cfg.grid) if cfg.calibration is None and cfg.coverage_normalized else None
    res = run_frame(scene.detections, cams, cfg.replace(seed=seed), frame_seed=seed, coverage=cov)
    fc = evaluate_frame(res.predictions, scene.positions(), cfg.eval, seed)
    rep = aggregate([fc])
    return Trial(
        study, setting, seed, rep.moda, rep.modp, rep.precision, rep.recall, rep.tp, rep.fp, rep.fn,
        res.n_points, res.n_detections, res.n_used,
    )


def study_settings(study: str, cfg: PipelineConfig):
    """(label, config) pairs swept by one ablation study."""
    if study == "standing_point":
        return [(m, cfg.replace(standing_point_mode=m)) for m in ("keypoint", "bottom-center")]
    if study == "sample_rate":
        return [(f"{r:.1f}", cfg.replace(sample_rate=r)) for r in SAMPLE_RATES]
    if study == "ground_plane":
        return [
            (f"{'ground' if g else 'no_ground'}@{r:.1f}", cfg.replace(sample_rate=r, include_ground_plane=g))
            for r in SAMPLE_RATES
            for g in (False, True)
        ]
    if study == "density":
        noise = dataclasses.replace(cfg.noise, occlusion_iou_threshold=OCCLUSION_IOU)
        return [(str(n), cfg.replace(n_pedestrians=n, noise=noise)) for n in DENSITIES]
    if study == "fixed_height":
        return [("recovered", cfg.replace(fixed_height=None)), (f"fixed_{FIXED_HEIGHT}", cfg.replace(fixed_height=FIXED_HEIGHT))]
    raise ValueError(f"unknown study {study!r}; choose from {STUDIES}")


def run_study(study: str, cfg: PipelineConfig, seeds) -> list[Trial]:
    return [run_trial(c, s, study, label) for label, c in study_settings(study, cfg) for s in seeds]


def mean_by_setting(trials, attr: str = "moda") -> dict[str, float]:
    out: dict[str, list[float]] = {}
    for t in trials:
        out.setdefault(t.setting, []).append(getattr(t, attr))
    return {k: float(np.mean(v)) for k, v in out.items()}


def write_trials(trials, path) -> None:
    fields = [f.name for f in dataclasses.fields(Trial)]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for t in trials:
            row = dataclasses.astuple(t)
            w.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in row])
