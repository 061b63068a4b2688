"""Ground-plane detection metrics (MODA, MODP, precision, recall) with a distance gate."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cardboard import GroundRect


@dataclass(frozen=True)
class EvalConfig:
    match_radius: float = 0.5
    mask: tuple[GroundRect, ...] = ()
    use_hungarian: bool = True

    def __post_init__(self):
        if not self.match_radius > 0:
            raise ValueError("match_radius must be positive")
        object.__setattr__(self, "mask", tuple(self.mask))


@dataclass(frozen=True, eq=False)
class Matching:
    pairs: np.ndarray  # (K, 2) int indices (pred, gt)
    distances: np.ndarray  # (K,)
    n_pred: int
    n_gt: int

    @property
    def total_distance(self) -> float:
        return float(self.distances.sum())


def _xy(points) -> np.ndarray:
    a = np.asarray(points, dtype=np.float64)
    if a.size == 0:
        return np.zeros((0, 2))
    return np.atleast_2d(a)[:, :2]


def _dist(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    return np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=-1)


def match_hungarian(pred, gt, radius: float) -> Matching:
    """Maximum-cardinality, then minimum-distance one-to-one matching within ``radius``."""
    p, g = _xy(pred), _xy(gt)
    if len(p) == 0 or len(g) == 0:
        return Matching(np.zeros((0, 2), np.int64), np.zeros(0), len(p), len(g))
    d = _dist(p, g)
    big = radius * (min(len(p), len(g)) + 1) + 1.0
    cost = np.where(d <= radius, d, big)
    r, c = linear_sum_assignment(cost)
    ok = d[r, c] <= radius
    pairs = np.stack([r[ok], c[ok]], axis=1).astype(np.int64)
    return Matching(pairs, d[r[ok], c[ok]], len(p), len(g))


def match_greedy(pred, gt, radius: float) -> Matching:
    """Nearest-first greedy matching; ties broken by (pred, gt) index."""
    p, g = _xy(pred), _xy(gt)
    if len(p) == 0 or len(g) == 0:
        return Matching(np.zeros((0, 2), np.int64), np.zeros(0), len(p), len(g))
    d = _dist(p, g)
    pi, gi = np.nonzero(d <= radius)
    order = np.lexsort((gi, pi, d[pi, gi]))
    used_p, used_g, pairs = set(), set(), []
    for k in order:
        a, b = int(pi[k]), int(gi[k])
        if a in used_p or b in used_g:
            continue
        used_p.add(a)
        used_g.add(b)
        pairs.append((a, b))
    pairs = np.array(pairs, np.int64).reshape(-1, 2)
    return Matching(pairs, d[pairs[:, 0], pairs[:, 1]], len(p), len(g))


def match(pred, gt, cfg: EvalConfig = EvalConfig()) -> Matching:
    fn = match_hungarian if cfg.use_hungarian else match_greedy
    return fn(pred, gt, cfg.match_radius)


@dataclass
class FrameCounts:
    frame: int
    tp: int
    fp: int
    fn: int
    gt: int
    dist_sum: float  # sum over TPs of (1 - d / radius)


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    moda: float
    modp: float
    precision: float
    recall: float
    frames: list[FrameCounts] = field(default_factory=list)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("frames")
        d["n_frames"] = len(self.frames)
        return d


def _rates(tp: int, fp: int, fn: int, modp_sum: float) -> tuple[float, float, float, float]:
    gt = tp + fn
    if gt > 0:
        moda = 1.0 - (fn + fp) / gt
    else:
        moda = 1.0 if fp == 0 else -float(fp)
    modp = modp_sum / tp if tp > 0 else 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return moda, modp, precision, recall


def frame_counts(m: Matching, cfg: EvalConfig = EvalConfig(), frame: int = 0) -> FrameCounts:
    tp = len(m.pairs)
    return FrameCounts(
        frame, tp, m.n_pred - tp, m.n_gt - tp, m.n_gt, float(np.sum(1.0 - m.distances / cfg.match_radius))
    )


def compute_metrics(matching, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Report for one Matching or an iterable of per-frame Matchings (counts are summed)."""
    ms = [matching] if isinstance(matching, Matching) else list(matching)
    frames = [frame_counts(m, cfg, k) for k, m in enumerate(ms)]
    return aggregate(frames)


def aggregate(frames) -> EvalReport:
    frames = list(frames)
    tp = sum(f.tp for f in frames)
    fp = sum(f.fp for f in frames)
    fn = sum(f.fn for f in frames)
    s = sum(f.dist_sum for f in frames)
    return EvalReport(tp, fp, fn, *_rates(tp, fp, fn, s), frames=frames)


def apply_mask(points, mask) -> np.ndarray:
    """Drop points inside any of the mask rectangles."""
    a = np.asarray(points, dtype=np.float64)
    if a.size == 0:
        return a.reshape(0, a.shape[-1] if a.ndim > 1 else 2)
    a = np.atleast_2d(a)
    keep = np.ones(len(a), bool)
    for rect in mask:
        keep &= ~rect.contains(a[:, :2])
    return a[keep]


def evaluate_frame(pred, gt, cfg: EvalConfig = EvalConfig(), frame: int = 0) -> FrameCounts:
    if cfg.mask:
        pred, gt = apply_mask(pred, cfg.mask), apply_mask(gt, cfg.mask)
    return frame_counts(match(pred, gt, cfg), cfg, frame)


def evaluate(frames_pred: dict, frames_gt: dict, cfg: EvalConfig = EvalConfig()) -> EvalReport:
    """Evaluate ``{frame: points}`` dicts; frames missing on one side count as empty."""
    keys = sorted(set(frames_pred) | set(frames_gt))
    return aggregate(evaluate_frame(frames_pred.get(k, []), frames_gt.get(k, []), cfg, k) for k in keys)


def write_report(report: EvalReport, csv_path, json_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "TP", "FP", "FN", "MODA", "MODP", "P", "R"])
        for f in report.frames:
            moda, modp, p, r = _rates(f.tp, f.fp, f.fn, f.dist_sum)
            w.writerow([f.frame, f.tp, f.fp, f.fn, f"{moda:.6f}", f"{modp:.6f}", f"{p:.6f}", f"{r:.6f}"])
    Path(json_path).write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
