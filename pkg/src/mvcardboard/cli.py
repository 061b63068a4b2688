"""Command line: simulate, pipeline, eval, ablate.

Exit codes: 0 ok, 1 usage, 2 malformed input, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .bev import write_heatmap, write_pgm
from .cardboard import write_cloud_csv
from .config import AGGREGATORS, STANDING_MODES, ConfigError, PipelineConfig, load_config
from .detection import InvalidDetection
from .evaluation import evaluate, write_report
from .geometry import CameraModel, GeometryError
from .pipeline import run_frame
from .simulator import (
    SceneConfig,
    read_detections,
    read_ground_truth,
    simulate,
    write_scene,
)

log = logging.getLogger("mvcardboard")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class MalformedInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid")
    p.add_argument("--rig")
    p.add_argument("--calibration", help="calibration JSON (overrides --rig)")
    p.add_argument("--sample-rate", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--aggregator", choices=AGGREGATORS)
    p.add_argument("--ground-plane", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--standing-point-mode", choices=STANDING_MODES)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvcardboard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render synthetic scenes")
    _common(p)
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--pedestrians", type=int)
    p.add_argument("--zero-noise", action="store_true")

    p = sub.add_parser("pipeline", help="detections -> predictions and heatmaps")
    _common(p)
    p.add_argument("scenes", nargs="+", help="scene or detection JSON files")
    p.add_argument("--write-cloud", action="store_true", help="also write the cardboard cloud CSV")
    p.add_argument("--pgm", action="store_true", help="also write PGM previews of the heatmaps")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _common(p)
    p.add_argument("pred", help="predictions JSON or scene file")
    p.add_argument("gt", nargs="+", help="scene files (or a predictions JSON) holding ground truth")

    p = sub.add_parser("ablate", help="run one ablation sweep over seeds")
    _common(p)
    p.add_argument("study", choices=experiments.STUDIES)
    p.add_argument("--seeds", type=int, default=20)
    return parser


def config_from_args(args) -> PipelineConfig:
    overrides = {
        "seed": args.seed,
        "grid": args.grid,
        "rig": args.rig,
        "calibration": args.calibration,
        "sample_rate": args.sample_rate,
        "threshold": args.threshold,
        "aggregator": args.aggregator,
        "include_ground_plane": args.ground_plane,
        "standing_point_mode": args.standing_point_mode,
    }
    if getattr(args, "pedestrians", None) is not None:
        overrides["n_pedestrians"] = args.pedestrians
    return load_config(args.config, overrides)


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise MalformedInput(f"{path}: no such file") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise MalformedInput(f"{path}: not valid JSON ({e})") from e
    if not isinstance(data, dict):
        raise MalformedInput(f"{path}: expected a JSON object")
    return data


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _frame_of(data: dict, default: int) -> int:
    return int(data.get("frame", default))


def cmd_simulate(args, cfg: PipelineConfig, out: Path) -> int:
    cams = experiments.cameras_for(cfg)
    noise = cfg.noise.zero() if args.zero_noise else cfg.noise
    for f in range(args.frames):
        seed = cfg.seed + f
        scene = simulate(SceneConfig(cfg.grid_spec(), cfg.n_pedestrians, seed=seed, body_facing=cfg.body_facing), cams, noise)
        write_scene(scene, out / f"scene_{f:04d}.json", cams, frame=f)
        n_det = sum(len(d) for d in scene.detections.values())
        print(f"frame {f}: {len(scene.pedestrians)} pedestrians, {n_det} detections")
    return EXIT_OK


def _cameras(data: dict, cfg: PipelineConfig):
    if "cameras" in data and cfg.calibration is None:
        return [CameraModel.from_dict(c) for c in data["cameras"]]
    return experiments.cameras_for(cfg)


def cmd_pipeline(args, cfg: PipelineConfig, out: Path) -> int:
    preds, summaries, clouds = {}, {}, []
    for k, path in enumerate(args.scenes):
        data = _read_json(path)
        frame = _frame_of(data, k)
        cams = _cameras(data, cfg)
        dets = read_detections(data)
        res = run_frame(dets, cams, cfg, frame_seed=frame)
        preds[str(frame)] = [[round(float(x), 6), round(float(y), 6)] for x, y, _ in res.predictions]
        summaries[str(frame)] = res.summary()
        if res.drops:
            log.warning("frame %d: dropped %s", frame, dict(sorted(res.drops.items())))
        if res.heatmap is not None:
            write_heatmap(res.heatmap, out / f"heatmap_{frame:04d}.bevh")
            if args.pgm:
                write_pgm(res.heatmap, out / f"heatmap_{frame:04d}.pgm")
        if args.write_cloud:
            clouds.extend(res.clouds)
        print(f"frame {frame}: {len(res.predictions)} predictions from {res.n_used}/{res.n_detections} detections")
    _dump({"predictions": preds, "summary": summaries, "config": cfg.to_json()}, out / "predictions.json")
    if args.write_cloud:
        write_cloud_csv(clouds, out / "cloud.csv")
    return EXIT_OK


def _load_points(paths) -> dict:
    """{frame: (N, 2) points} from a predictions JSON or from scene files."""
    frames = {}
    for k, path in enumerate(paths):
        data = _read_json(path)
        if "predictions" in data:
            for key, pts in data["predictions"].items():
                frames[int(key)] = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        elif "pedestrians" in data:
            frames[_frame_of(data, k)] = read_ground_truth(data)[:, :2]
        else:
            raise MalformedInput(f"{path}: neither predictions nor a scene")
    return frames


def cmd_eval(args, cfg: PipelineConfig, out: Path) -> int:
    pred = _load_points([args.pred])
    gt = _load_points(args.gt)
    report = evaluate(pred, gt, cfg.eval)
    write_report(report, out / "report.csv", out / "report.json")
    s = report.summary()
    print(" ".join(f"{k}={s[k]:.4f}" if isinstance(s[k], float) else f"{k}={s[k]}" for k in ("moda", "modp", "precision", "recall")))
    return EXIT_OK


def cmd_ablate(args, cfg: PipelineConfig, out: Path) -> int:
    trials = experiments.run_study(args.study, cfg, range(cfg.seed, cfg.seed + args.seeds))
    experiments.write_trials(trials, out / f"ablate_{args.study}.csv")
    for label, m in experiments.mean_by_setting(trials).items():
        print(f"{args.study} {label}: mean MODA {m:.4f}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "pipeline": cmd_pipeline, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (MalformedInput, ConfigError, InvalidDetection, GeometryError, KeyError, TypeError, ValueError) as e:
        print(f"malformed input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # anything else is a broken invariant
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
