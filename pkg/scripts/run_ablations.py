"""Run every ablation study and write one CSV per study plus a means table.

    python scripts/run_ablations.py --config configs/simulator_tuned.json --seeds 20 --out results/
"""
import argparse
import json
from pathlib import Path

from mvcardboard.config import load_config
from mvcardboard.experiments import STUDIES, mean_by_setting, run_study, write_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--studies", nargs="+", default=list(STUDIES), choices=STUDIES)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    means = {}
    for study in args.studies:
        trials = run_study(study, cfg, range(args.seeds))
        write_trials(trials, out / f"ablate_{study}.csv")
        means[study] = {k: round(v, 4) for k, v in mean_by_setting(trials).items()}
        for label, m in means[study].items():
            print(f"{study:15s} {label:22s} MODA {m:.4f}", flush=True)
    (out / "means.json").write_text(json.dumps(means, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
