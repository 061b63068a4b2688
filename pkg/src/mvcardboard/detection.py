"""Per-view detection records shared by the simulator, ray tracer and cloud builder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidDetection(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        vals = (self.u_min, self.v_min, self.u_max, self.v_max)
        if not all(math.isfinite(x) for x in vals):
            raise InvalidDetection(f"non-finite box {vals}")
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise InvalidDetection(f"box is not well ordered: {vals}")

    @property
    def width(self) -> float:
        return self.u_max - self.u_min

    @property
    def height(self) -> float:
        return self.v_max - self.v_min

    @property
    def bottom_center(self) -> tuple[float, float]:
        return (0.5 * (self.u_min + self.u_max), self.v_max)

    def pixel_shape(self) -> tuple[int, int]:
        """(rows, cols) of the pixel lattice spanned by the box."""
        return max(int(round(self.height)), 1), max(int(round(self.width)), 1)

    def as_list(self) -> list[float]:
        return [self.u_min, self.v_min, self.u_max, self.v_max]

    def iou(self, other: "BBox") -> float:
        iw = min(self.u_max, other.u_max) - max(self.u_min, other.u_min)
        ih = min(self.v_max, other.v_max) - max(self.v_min, other.v_min)
        if iw <= 0 or ih <= 0:
            return 0.0
        inter = iw * ih
        return inter / (self.width * self.height + other.width * other.height - inter)


@dataclass(frozen=True, eq=False)
class Detection:
    """One 2D detection in one camera.

    ``color_patch`` is either an (h, w, 3) array matching the box pixel
    lattice, a flat RGB triple, or None (neutral gray downstream).
    """

    camera_id: str
    box: BBox
    standing_px: tuple[float, float]
    confidence: float = 1.0
    color_patch: np.ndarray | None = None
    pedestrian_id: int | None = None  # simulator bookkeeping; -1 marks a false positive

    def __post_init__(self):
        su, sv = (float(x) for x in self.standing_px)
        if not (math.isfinite(su) and math.isfinite(sv)):
            raise InvalidDetection("standing point must be finite")
        object.__setattr__(self, "standing_px", (su, sv))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidDetection(f"confidence {self.confidence} outside [0, 1]")
        if self.color_patch is not None:
            patch = np.asarray(self.color_patch, dtype=np.float64)
            if patch.shape[-1] != 3 or patch.ndim not in (1, 3):
                raise InvalidDetection(f"color patch must be (3,) or (h, w, 3), got {patch.shape}")
            if np.any(patch < 0) or np.any(patch > 1):
                raise InvalidDetection("color values must lie in [0, 1]")
            object.__setattr__(self, "color_patch", patch)

    def standing_in_box(self, slack: float | None = None) -> bool:
        """Standing pixel inside the box, vertically padded by ``slack`` (default: box height)."""
        b = self.box
        s = b.height if slack is None else slack
        u, v = self.standing_px
        return b.u_min <= u <= b.u_max and b.v_min - s <= v <= b.v_max + s

    def to_json(self) -> dict:
        d = {
            "box": [float(x) for x in self.box.as_list()],
            "standing": [self.standing_px[0], self.standing_px[1]],
            "confidence": float(self.confidence),
        }
        if self.color_patch is not None and self.color_patch.ndim == 1:
            d["color"] = [float(x) for x in self.color_patch]
        if self.pedestrian_id is not None:
            d["pedestrian_id"] = int(self.pedestrian_id)
        return d

    @classmethod
    def from_json(cls, camera_id: str, d: dict) -> "Detection":
        try:
            box = BBox(*(float(x) for x in d["box"]))
            su, sv = (float(x) for x in d["standing"])
            color = d.get("color")
            return cls(
                camera_id=str(camera_id),
                box=box,
                standing_px=(su, sv),
                confidence=float(d.get("confidence", 1.0)),
                color_patch=None if color is None else np.asarray(color, dtype=np.float64),
                pedestrian_id=d.get("pedestrian_id"),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidDetection):
                raise
            raise InvalidDetection(f"malformed detection record {d!r}: {e}") from e
