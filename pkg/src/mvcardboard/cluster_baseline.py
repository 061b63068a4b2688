"""Geometry-only baseline: greedy clustering of per-view standing points on the ground."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GroundObservation:
    camera_id: str
    position: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).ravel()
        if p.size == 2:
            p = np.r_[p, 0.0]
        if p.size != 3 or p[2] != 0.0:
            raise ValueError("ground observations must lie on Z = 0")
        object.__setattr__(self, "position", p)


def cluster_standing_points(obs, radius: float = 0.5, min_views: int = 2) -> np.ndarray:
    """Centroids (K, 3) of greedy clusters supported by >= ``min_views`` cameras.

    Observations are visited by descending confidence (ties: camera id, then
    position). Each unassigned seed absorbs the nearest unassigned
    observation within ``radius`` of it from every other camera.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if min_views < 1:
        raise ValueError("min_views must be >= 1")
    obs = sorted(
        obs, key=lambda o: (-o.confidence, o.camera_id, float(o.position[0]), float(o.position[1]))
    )
    if not obs:
        return np.zeros((0, 3))
    pos = np.array([o.position for o in obs])
    cams = [o.camera_id for o in obs]
    free = np.ones(len(obs), bool)
    centroids = []
    for s in range(len(obs)):
        if not free[s]:
            continue
        free[s] = False
        members = [s]
        d = np.linalg.norm(pos[:, :2] - pos[s, :2], axis=1)
        near = np.flatnonzero(free & (d <= radius))
        taken = {cams[s]}
        for k in near[np.argsort(d[near], kind="stable")]:
            if cams[k] in taken:
                continue
            taken.add(cams[k])
            members.append(k)
            free[k] = False
        if len(taken) >= min_views:
            c = pos[members].mean(axis=0)
            c[2] = 0.0
            centroids.append(c)
    return np.array(centroids).reshape(-1, 3)
