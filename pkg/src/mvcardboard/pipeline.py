"""Detections -> anchors -> cardboard clouds -> pillars -> heatmap -> peaks."""
from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .bev import (
    Heatmap,
    bin_clouds,
    coverage_map,
    extract_peaks,
    refine_peaks,
    score_occupancy,
)
from .cardboard import CardboardCloud, build_cardboard, build_ground_plane_cloud, sample_cloud
from .cluster_baseline import GroundObservation, cluster_standing_points
from .config import PipelineConfig
from .raytrace import RaytraceError, anchor_from_detection, interpolate_box_depth

log = logging.getLogger(__name__)


@dataclass
class FrameResult:
    predictions: np.ndarray  # (K, 3) ground points
    heatmap: Heatmap | None
    clouds: list[CardboardCloud]
    n_detections: int = 0
    n_used: int = 0
    drops: Counter = field(default_factory=Counter)
    n_points: int = 0
    dropped_points: int = 0

    def summary(self) -> dict:
        return {
            "detections": self.n_detections,
            "used": self.n_used,
            "dropped": dict(sorted(self.drops.items())),
            "points": self.n_points,
            "points_outside_grid": self.dropped_points,
            "predictions": int(len(self.predictions)),
        }


def build_clouds(detections: dict, cams, cfg: PipelineConfig, frame_seed: int = 0):
    """Anchors and sampled cardboard clouds for every usable detection.

    Returns (clouds, confidences, n_detections, drop counter). Detections whose geometry
    fails are counted by error category, never silently skipped.
    """
    cam_by_id = {c.id: c for c in cams}
    clouds: list[CardboardCloud] = []
    confs: list[float] = []
    drops: Counter = Counter()
    n = 0
    for ci, cam in enumerate(cams):
        for di, det in enumerate(detections.get(cam.id, [])):
            n += 1
            try:
                anchor = anchor_from_detection(
                    cam, det, cfg.standing_point_mode, cfg.height_bounds, cfg.fixed_height
                )
                patch = interpolate_box_depth(anchor, det.box)
            except RaytraceError as e:
                drops[e.category] += 1
                continue
            cloud = build_cardboard(cam, det, patch, cfg.stride, anchor)
            if cfg.sample_rate < 1.0 and not cfg.pillar_sampling:
                cloud = sample_cloud(cloud, cfg.sample_rate, (cfg.seed, frame_seed, ci, di))
            clouds.append(cloud)
            confs.append(det.confidence)
    unknown = sorted(set(detections) - set(cam_by_id))
    for cid in unknown:
        drops["UnknownCamera"] += len(detections[cid])
        n += len(detections[cid])
    if drops:
        log.info("dropped detections: %s", dict(drops))
    return clouds, confs, n, drops


def run_frame(detections: dict, cams, cfg: PipelineConfig, frame_seed: int = 0, coverage=None) -> FrameResult:
    grid = cfg.grid_spec()
    clouds, confs, n_det, drops = build_clouds(detections, cams, cfg, frame_seed)
    n_used = len(clouds)
    if cfg.aggregator == "cluster":
        obs = [GroundObservation(c.camera_id, c.anchor.standing_world, w) for c, w in zip(clouds, confs)]
        preds = cluster_standing_points(obs, cfg.cluster_radius, cfg.cluster_min_views)
        return FrameResult(preds, None, clouds, n_det, n_used, drops, sum(len(c) for c in clouds), 0)

    all_clouds = list(clouds)
    if cfg.include_ground_plane:
        all_clouds.append(build_ground_plane_cloud(grid.extent, cfg.ground_spacing))
    pillars = bin_clouds(
        all_clouds,
        grid,
        camera_ids=[c.id for c in cams],
        pillar_sample_rate=cfg.sample_rate if cfg.pillar_sampling else None,
        seed=(cfg.seed, frame_seed),
    )
    if cfg.coverage_normalized and coverage is None:
        coverage = coverage_map(cams, grid)
    hm = score_occupancy(pillars, cfg.weights, coverage if cfg.coverage_normalized else None)
    peaks = extract_peaks(hm, cfg.threshold, cfg.min_peak_dist)
    if cfg.refine_radius > 0:
        sharp = dataclasses.replace(cfg.weights, view_radius=0, blur_sigma=cfg.refine_sigma)
        fine = score_occupancy(pillars, sharp, coverage if cfg.coverage_normalized else None)
        peaks = refine_peaks(peaks, fine, cfg.refine_radius, cfg.min_peak_dist)
    preds = np.hstack([peaks, np.zeros((len(peaks), 1))])
    return FrameResult(preds, hm, all_clouds, n_det, n_used, drops, pillars.total_points + pillars.dropped, pillars.dropped)

