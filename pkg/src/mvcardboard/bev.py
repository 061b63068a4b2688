"""Bird's-eye-view pillars, occupancy scoring, Gaussian targets, focal loss and peaks.

Grid convention: cell (i, j) covers x in [ox + i*cx, ox + (i+1)*cx) and
y in [oy + j*cy, oy + (j+1)*cy); rows index x, columns index y.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .cardboard import CardboardCloud, GroundRect

COLOR_SCALE = 1 << 16  # colors are accumulated as integers in units of 1/COLOR_SCALE
HEATMAP_MAGIC = b"BEVH"


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float]
    cell_size_x: float
    cell_size_y: float
    n_rows: int
    n_cols: int

    def __post_init__(self):
        if not (self.cell_size_x > 0 and self.cell_size_y > 0):
            raise ValueError("cell sizes must be positive")
        if self.n_rows <= 0 or self.n_cols <= 0:
            raise ValueError("grid must have at least one cell")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def from_extent(cls, width_x: float, length_y: float, n_rows: int, n_cols: int, origin=(0.0, 0.0)):
        return cls(origin, width_x / n_rows, length_y / n_cols, n_rows, n_cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def extent(self) -> GroundRect:
        ox, oy = self.origin
        return GroundRect(ox, oy, ox + self.n_rows * self.cell_size_x, oy + self.n_cols * self.cell_size_y)

    @property
    def cell_size(self) -> float:
        """Larger of the two cell edges (used for cell-count tolerances)."""
        return max(self.cell_size_x, self.cell_size_y)

    def cell_index(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        i = np.floor((xy[..., 0] - self.origin[0]) / self.cell_size_x).astype(np.int64)
        j = np.floor((xy[..., 1] - self.origin[1]) / self.cell_size_y).astype(np.int64)
        return i, j

    def inside(self, i, j) -> np.ndarray:
        return (i >= 0) & (i < self.n_rows) & (j >= 0) & (j < self.n_cols)

    def cell_center(self, i, j) -> np.ndarray:
        i = np.asarray(i, dtype=np.float64)
        j = np.asarray(j, dtype=np.float64)
        return np.stack(
            [self.origin[0] + (i + 0.5) * self.cell_size_x, self.origin[1] + (j + 0.5) * self.cell_size_y], axis=-1
        )

    def cell_centers(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.n_rows), np.arange(self.n_cols), indexing="ij")
        return self.cell_center(ii, jj)


WILDTRACK = GridSpec.from_extent(12.0, 36.0, 480, 1440)
MULTIVIEWX = GridSpec.from_extent(16.0, 23.0, 640, 1000)
GRID_PRESETS = {"wildtrack": WILDTRACK, "multiviewx": MULTIVIEWX}


def grid_preset(name: str) -> GridSpec:
    try:
        return GRID_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown grid preset {name!r}; choose from {sorted(GRID_PRESETS)}") from None


@dataclass(eq=False)
class PillarGrid:
    """Per-cell statistics. Integer accumulators make merging order-independent."""

    grid: GridSpec
    camera_ids: tuple[str, ...]
    point_count: np.ndarray
    view_mask: np.ndarray
    color_sum: np.ndarray
    height_max: np.ndarray
    anchor_hits: np.ndarray
    dropped: int = 0

    @classmethod
    def empty(cls, grid: GridSpec, camera_ids=()) -> "PillarGrid":
        if len(camera_ids) > 63:
            raise ValueError("at most 63 cameras fit the view bitmask")
        shape = grid.shape
        return cls(
            grid,
            tuple(camera_ids),
            np.zeros(shape, np.int64),
            np.zeros(shape, np.uint64),
            np.zeros(shape + (3,), np.int64),
            np.zeros(shape, np.float64),
            np.zeros(shape, np.int64),
        )

    @property
    def n_cameras(self) -> int:
        return len(self.camera_ids)

    @property
    def total_points(self) -> int:
        return int(self.point_count.sum())

    @property
    def mean_color(self) -> np.ndarray:
        n = np.maximum(self.point_count, 1)[..., None]
        return self.color_sum / (n * COLOR_SCALE)

    def view_count(self) -> np.ndarray:
        return _popcount(self.view_mask)

    def same_as(self, other: "PillarGrid") -> bool:
        return (
            self.grid == other.grid
            and self.camera_ids == other.camera_ids
            and self.dropped == other.dropped
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("point_count", "view_mask", "color_sum", "height_max", "anchor_hits")
            )
        )


def _popcount(mask: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(mask).astype(np.int64)
    m = mask.copy()
    out = np.zeros(mask.shape, np.int64)
    while np.any(m):
        out += (m & np.uint64(1)).astype(np.int64)
        m >>= np.uint64(1)
    return out


def merge_pillars(a: PillarGrid, b: PillarGrid) -> PillarGrid:
    """Associative, commutative merge of two partial grids over the same cameras."""
    if a.grid != b.grid or a.camera_ids != b.camera_ids:
        raise GridMismatch("cannot merge pillar grids with different grids or cameras")
    return PillarGrid(
        a.grid,
        a.camera_ids,
        a.point_count + b.point_count,
        a.view_mask | b.view_mask,
        a.color_sum + b.color_sum,
        np.maximum(a.height_max, b.height_max),
        a.anchor_hits + b.anchor_hits,
        a.dropped + b.dropped,
    )


def _pillar_subsample(flat: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Mask keeping round(rate * n) random points within each cell."""
    prio = rng.random(len(flat))
    order = np.lexsort((prio, flat))
    sorted_cells = flat[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_cells)) + 1]
    counts = np.diff(np.r_[starts, len(flat)])
    rank = np.arange(len(flat)) - np.repeat(starts, counts)
    keep_n = np.floor(rate * counts + 0.5).astype(np.int64)
    keep_sorted = rank < np.repeat(keep_n, counts)
    keep = np.zeros(len(flat), bool)
    keep[order] = keep_sorted
    return keep


def bin_clouds(
    clouds,
    grid: GridSpec,
    camera_ids=None,
    pillar_sample_rate: float | None = None,
    seed=0,
) -> PillarGrid:
    """Accumulate cloud points and anchors into BEV pillars.

    ``camera_ids`` fixes the view-bit assignment (defaults to the sorted ids
    present). Clouds without a camera id (e.g. the ground plane) add points
    but no view bits. ``pillar_sample_rate`` optionally subsamples inside
    each pillar instead of per cloud.
    """
    clouds = list(clouds)
    if camera_ids is None:
        camera_ids = sorted({c.camera_id for c in clouds if c.camera_id is not None})
    out = PillarGrid.empty(grid, camera_ids)
    bit = {cid: k for k, cid in enumerate(out.camera_ids)}
    n_cells = grid.n_rows * grid.n_cols

    pts, cams, anchors = [], [], []
    for c in clouds:
        if c.camera_id is not None and c.camera_id not in bit:
            raise GridMismatch(f"camera {c.camera_id!r} not in {out.camera_ids}")
        pts.append(c.points)
        cams.append(np.full(len(c), -1 if c.camera_id is None else bit[c.camera_id], np.int64))
        if c.anchor is not None:
            anchors.append(c.anchor.standing_world[:2])
    if pts:
        P = np.concatenate(pts)
        cam_bits = np.concatenate(cams)
    else:
        P = np.zeros((0, 6))
        cam_bits = np.zeros(0, np.int64)

    i, j = grid.cell_index(P[:, :2])
    ok = grid.inside(i, j) & np.all(np.isfinite(P[:, :3]), axis=1)
    out.dropped = int(np.count_nonzero(~ok))
    flat = i[ok] * grid.n_cols + j[ok]
    P, cam_bits = P[ok], cam_bits[ok]
    if pillar_sample_rate is not None and len(flat):
        keep = _pillar_subsample(flat, pillar_sample_rate, np.random.default_rng(seed))
        flat, P, cam_bits = flat[keep], P[keep], cam_bits[keep]

    out.point_count = np.bincount(flat, minlength=n_cells).reshape(grid.shape).astype(np.int64)
    cint = np.rint(np.clip(P[:, 3:], 0.0, 1.0) * COLOR_SCALE).astype(np.int64)
    for ch in range(3):
        s = np.bincount(flat, weights=cint[:, ch], minlength=n_cells)
        out.color_sum[..., ch] = np.rint(s).astype(np.int64).reshape(grid.shape)
    hmax = np.zeros(n_cells)
    np.maximum.at(hmax, flat, np.maximum(P[:, 2], 0.0))
    out.height_max = hmax.reshape(grid.shape)

    vm = np.zeros(n_cells, np.uint64)
    has_cam = cam_bits >= 0
    for k in range(out.n_cameras):
        cells = np.unique(flat[has_cam & (cam_bits == k)])
        vm[cells] |= np.uint64(1) << np.uint64(k)
    out.view_mask = vm.reshape(grid.shape)

    if anchors:
        ai, aj = grid.cell_index(np.asarray(anchors))
        ain = grid.inside(ai, aj)
        np.add.at(out.anchor_hits, (ai[ain], aj[ain]), 1)
    return out


@dataclass(frozen=True)
class ScoreWeights:
    w_views: float = 0.5
    w_anchor: float = 0.4
    w_density: float = 0.1
    density_ref: float = 50.0
    blur_sigma: float = 2.0  # cells
    view_radius: int = 0  # cells; a camera counts for a cell if it has points within this Chebyshev radius

    def __post_init__(self):
        if min(self.w_views, self.w_anchor, self.w_density) < 0:
            raise ValueError("score weights must be non-negative")
        if not self.density_ref > 0 or self.blur_sigma < 0 or self.view_radius < 0:
            raise ValueError("density_ref must be positive, blur_sigma and view_radius non-negative")


@dataclass(frozen=True, eq=False)
class Heatmap:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values {v.shape} vs grid {self.grid.shape}")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("heatmap values must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def coverage_map(cams, grid: GridSpec) -> np.ndarray:
    """Number of cameras whose image contains each ground cell center."""
    xy = grid.cell_centers().reshape(-1, 2)
    world = np.hstack([xy, np.zeros((len(xy), 1))])
    cover = np.zeros(len(xy), np.int64)
    for cam in cams:
        pc = world @ cam.R.T + cam.T
        z = pc[:, 2]
        front = z > 1e-9
        zs = np.where(front, z, 1.0)
        u = cam.intrinsics.fx * pc[:, 0] / zs + cam.intrinsics.cx
        v = cam.intrinsics.fy * pc[:, 1] / zs + cam.intrinsics.cy
        cover += front & (u >= 0) & (u <= cam.width) & (v >= 0) & (v <= cam.height)
    return cover.reshape(grid.shape)


def dilated_view_count(pillars: PillarGrid, radius: int) -> np.ndarray:
    if radius <= 0:
        return pillars.view_count()
    size = 2 * int(radius) + 1
    out = np.zeros(pillars.grid.shape, np.int64)
    for k in range(pillars.n_cameras):
        m = (pillars.view_mask >> np.uint64(k)) & np.uint64(1)
        out += ndimage.maximum_filter(m.astype(np.uint8), size=size, mode="constant")
    return out


def raw_scores(pillars: PillarGrid, weights: ScoreWeights = ScoreWeights(), coverage=None) -> np.ndarray:
    views = dilated_view_count(pillars, weights.view_radius).astype(np.float64)
    if coverage is None:
        frac = views / max(pillars.n_cameras, 1)
    else:
        frac = np.minimum(views / np.maximum(np.asarray(coverage, dtype=np.float64), 1.0), 1.0)
    density = np.minimum(pillars.point_count / weights.density_ref, 1.0)
    anchor = np.minimum(pillars.anchor_hits, 1)
    return weights.w_views * frac + weights.w_anchor * anchor + weights.w_density * density


def score_occupancy(pillars: PillarGrid, weights: ScoreWeights = ScoreWeights(), coverage=None) -> Heatmap:
    """Weighted view / anchor / density evidence, Gaussian-blurred and scaled to max 1.

    The view term is the fraction of cameras contributing points to the cell,
    out of all cameras or, when ``coverage`` is given, out of the cameras that
    actually see the cell.
    """
    raw = raw_scores(pillars, weights, coverage)
    if weights.blur_sigma > 0:
        raw = ndimage.gaussian_filter(raw, weights.blur_sigma, mode="constant", truncate=3.0)
    top = raw.max()
    if top > 0:
        raw = raw / top
    return Heatmap(pillars.grid, np.clip(raw, 0.0, 1.0))


def encode_gaussian_gt(positions, grid: GridSpec, sigma: float = 3.0) -> Heatmap:
    """Max-combined Gaussian splats (sigma in cells) centred on each position's cell."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    values = np.zeros(grid.shape)
    r = int(np.ceil(3 * sigma))
    off = np.arange(-r, r + 1)
    kernel = np.exp(-(off[:, None] ** 2 + off[None, :] ** 2) / (2.0 * sigma**2))
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size == 0:
        return Heatmap(grid, values)
    pos = np.atleast_2d(pos)
    ci, cj = grid.cell_index(pos[:, :2])
    for i, j in zip(ci.tolist(), cj.tolist()):
        i0, i1 = max(i - r, 0), min(i + r + 1, grid.n_rows)
        j0, j1 = max(j - r, 0), min(j + r + 1, grid.n_cols)
        if i0 >= i1 or j0 >= j1:
            continue
        k = kernel[i0 - i + r : i1 - i + r, j0 - j + r : j1 - j + r]
        np.maximum(values[i0:i1, j0:j1], k, out=values[i0:i1, j0:j1])
    return Heatmap(grid, values)


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 2.0
    gamma: float = 4.0

    def __post_init__(self):
        if not self.alpha > 0 or self.gamma < 0:
            raise ValueError("need alpha > 0 and gamma >= 0")


P_EPS = 1e-6


def focal_positive_term(p, params: FocalParams = FocalParams()):
    """``-alpha (1 - p)^gamma log p`` on its own."""
    p = np.clip(np.asarray(p, dtype=np.float64), P_EPS, 1 - P_EPS)
    return -params.alpha * (1 - p) ** params.gamma * np.log(p)


def focal_loss(pred: Heatmap, target: Heatmap, params: FocalParams = FocalParams()) -> float:
    """Mean focal loss; cells with target 1 are positives, the rest use the
    penalty-reduced negative branch ``-alpha (1 - t)^4 p^gamma log(1 - p)``."""
    if pred.grid != target.grid:
        raise GridMismatch("prediction and target live on different grids")
    p = np.clip(pred.values, P_EPS, 1 - P_EPS)
    t = target.values
    pos = t >= 1.0
    loss = np.where(
        pos,
        -params.alpha * (1 - p) ** params.gamma * np.log(p),
        -params.alpha * (1 - t) ** 4 * p**params.gamma * np.log(1 - p),
    )
    return float(loss.mean())


def extract_peaks(hm: Heatmap, threshold: float = 0.8, min_dist: float = 0.5) -> np.ndarray:
    """Cell-center coordinates (K, 2) of thresholded 3x3 maxima, greedy min_dist NMS."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    v = hm.values
    local = ndimage.maximum_filter(v, size=3, mode="constant", cval=-np.inf)
    cand = np.flatnonzero(((v >= local) & (v >= threshold) & (v > 0)).ravel())
    if len(cand) == 0:
        return np.zeros((0, 2))
    scores = v.ravel()[cand]
    order = np.lexsort((cand, -scores))
    ci, cj = np.divmod(cand[order], hm.grid.n_cols)
    xy = hm.grid.cell_center(ci, cj)
    kept: list[int] = []
    d2min = min_dist * min_dist
    for k in range(len(xy)):
        if kept:
            d = xy[kept] - xy[k]
            if np.min(np.einsum("ij,ij->i", d, d)) < d2min:
                continue
        kept.append(k)
    return xy[kept]


def refine_peaks(peaks: np.ndarray, fine: Heatmap, radius: float, min_dist: float = 0.5) -> np.ndarray:
    """Move each peak to the highest ``fine`` cell within ``radius`` meters.

    Peaks keep their input (score) order; a moved peak closer than ``min_dist``
    to an already kept one is discarded.
    """
    peaks = np.asarray(peaks, dtype=np.float64).reshape(-1, 2)
    if radius <= 0 or len(peaks) == 0:
        return peaks
    g = fine.grid
    ri = int(np.floor(radius / g.cell_size_x))
    rj = int(np.floor(radius / g.cell_size_y))
    di, dj = np.meshgrid(np.arange(-ri, ri + 1), np.arange(-rj, rj + 1), indexing="ij")
    disk = (di * g.cell_size_x) ** 2 + (dj * g.cell_size_y) ** 2 <= radius * radius
    di, dj = di[disk], dj[disk]
    ci, cj = g.cell_index(peaks)
    kept: list[np.ndarray] = []
    for i, j in zip(ci.tolist(), cj.tolist()):
        ii, jj = i + di, j + dj
        ok = g.inside(ii, jj)
        ii, jj = ii[ok], jj[ok]
        vals = fine.values[ii, jj]
        # ties go to the cell nearest the original peak, then lowest index
        order = np.lexsort((jj, ii, di[ok] ** 2 + dj[ok] ** 2, -vals))
        xy = g.cell_center(ii[order[0]], jj[order[0]])
        if kept and np.min(np.sum((np.array(kept) - xy) ** 2, axis=1)) < min_dist * min_dist:
            continue
        kept.append(xy)
    return np.array(kept).reshape(-1, 2)


def write_heatmap(hm: Heatmap, path) -> None:
    """Binary dump: b"BEVH", u32 rows, u32 cols, f32 cell size, then row-major f32 values."""
    header = HEATMAP_MAGIC + struct.pack("<IIf", hm.grid.n_rows, hm.grid.n_cols, hm.grid.cell_size_x)
    Path(path).write_bytes(header + hm.values.astype("<f4").tobytes())


def read_heatmap(path, grid: GridSpec | None = None) -> Heatmap:
    raw = Path(path).read_bytes()
    if raw[:4] != HEATMAP_MAGIC:
        raise ValueError(f"{path}: not a BEVH heatmap")
    rows, cols, cell = struct.unpack("<IIf", raw[4:16])
    values = np.frombuffer(raw[16:], dtype="<f4").astype(np.float64)
    if values.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {values.size}")
    if grid is None:
        grid = GridSpec((0.0, 0.0), float(cell), float(cell), rows, cols)
    elif grid.shape != (rows, cols):
        raise GridMismatch(f"file grid {(rows, cols)} vs expected {grid.shape}")
    return Heatmap(grid, np.clip(values.reshape(rows, cols), 0.0, 1.0))


def write_pgm(hm: Heatmap, path) -> None:
    img = np.clip(np.rint(hm.values * 255), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())
