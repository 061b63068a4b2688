"""Pipeline configuration: defaults < JSON file < explicit overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bev import GRID_PRESETS, GridSpec, ScoreWeights, grid_preset
from .cardboard import GroundRect
from .evaluation import EvalConfig
from .simulator import BODY_FACINGS, RIG_PRESETS, NoiseModel

AGGREGATORS = ("pillar", "cluster")
STANDING_MODES = ("keypoint", "bottom-center")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    grid: str = "wildtrack"
    rig: str = "wildtrack_like"
    calibration: str | None = None
    sample_rate: float = 0.5
    pillar_sampling: bool = False  # sample inside pillars instead of per cloud
    include_ground_plane: bool = False
    ground_spacing: float = 0.1
    threshold: float = 0.8
    min_peak_dist: float = 0.5
    refine_radius: float = 0.0  # meters; 0 reports peaks of the scored map as-is
    refine_sigma: float = 2.0  # cells; blur of the sharp map used for refinement
    aggregator: str = "pillar"
    standing_point_mode: str = "keypoint"
    stride: int | None = None
    height_bounds: tuple[float, float] = (0.5, 2.5)
    fixed_height: float | None = None
    weights: ScoreWeights = ScoreWeights()
    coverage_normalized: bool = True
    cluster_radius: float = 0.5
    cluster_min_views: int = 2
    n_pedestrians: int = 20
    body_facing: str = "image"
    noise: NoiseModel = NoiseModel()
    eval: EvalConfig = EvalConfig()
    seed: int = 0

    def __post_init__(self):
        if self.grid not in GRID_PRESETS:
            raise ConfigError(f"grid must be one of {sorted(GRID_PRESETS)}")
        if self.calibration is None and self.rig not in RIG_PRESETS:
            raise ConfigError(f"rig must be one of {list(RIG_PRESETS)}")
        if not 0.0 <= self.sample_rate <= 1.0:
            raise ConfigError("sample_rate must lie in [0, 1]")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if not self.min_peak_dist >= 0 or not self.ground_spacing > 0:
            raise ConfigError("min_peak_dist must be >= 0 and ground_spacing > 0")
        if not self.refine_radius >= 0 or not self.refine_sigma >= 0:
            raise ConfigError("refine_radius and refine_sigma must be >= 0")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"aggregator must be one of {AGGREGATORS}")
        if self.standing_point_mode not in STANDING_MODES:
            raise ConfigError(f"standing_point_mode must be one of {STANDING_MODES}")
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be >= 1")
        lo, hi = self.height_bounds
        if not 0 <= lo < hi:
            raise ConfigError("height_bounds must satisfy 0 <= lo < hi")
        if self.fixed_height is not None and not self.fixed_height > 0:
            raise ConfigError("fixed_height must be positive")
        if not self.cluster_radius > 0 or self.cluster_min_views < 1:
            raise ConfigError("cluster_radius must be positive and cluster_min_views >= 1")
        if self.n_pedestrians < 0:
            raise ConfigError("n_pedestrians must be >= 0")
        if self.body_facing not in BODY_FACINGS:
            raise ConfigError(f"body_facing must be one of {BODY_FACINGS}")

    def grid_spec(self) -> GridSpec:
        return grid_preset(self.grid)

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["height_bounds"] = list(self.height_bounds)
        d["eval"]["mask"] = [dataclasses.asdict(r) for r in self.eval.mask]
        return d


_NESTED = {"weights": ScoreWeights, "noise": NoiseModel, "eval": EvalConfig}


def _build(data: dict, base: PipelineConfig) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if k in _NESTED:
            if not isinstance(v, dict):
                raise ConfigError(f"'{k}' must be an object")
            cur = dataclasses.asdict(getattr(base, k))
            cur.update(v)
            if k == "eval":
                cur["mask"] = tuple(
                    r if isinstance(r, GroundRect) else GroundRect(**r) if isinstance(r, dict) else GroundRect(*r)
                    for r in cur.get("mask", ())
                )
            kw[k] = _NESTED[k](**cur)
        elif k == "height_bounds":
            kw[k] = tuple(float(x) for x in v)
        else:
            kw[k] = v
    try:
        return dataclasses.replace(base, **kw)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the JSON file at ``path``, then ``overrides`` (None values ignored)."""
    cfg = PipelineConfig()
    try:
        if path is not None:
            data = json.loads(Path(path).read_text())
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
            cfg = _build(data, cfg)
        if overrides:
            cfg = _build({k: v for k, v in overrides.items() if v is not None}, cfg)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    return cfg
