"""Grid search of blur, view radius and threshold on held-out seeds.

Selects by mean MODA (keypoint mode, 20 pedestrians, default noise) on
seeds disjoint from the ones used by the acceptance tests.

    python scripts/tune_scorer.py --seeds 100 110
"""
import argparse
import itertools

import numpy as np

from mvcardboard.bev import ScoreWeights
from mvcardboard.config import load_config
from mvcardboard.experiments import run_trial


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs=2, default=(100, 110), metavar=("FIRST", "STOP"))
    ap.add_argument("--blur", type=float, nargs="+", default=[4.0, 6.0, 8.0])
    ap.add_argument("--view-radius", type=int, nargs="+", default=[0, 4, 8])
    ap.add_argument("--threshold", type=float, nargs="+", default=[0.35, 0.4, 0.45, 0.5])
    ap.add_argument("--refine-radius", type=float, default=0.0)
    args = ap.parse_args()

    base = load_config(args.config).replace(refine_radius=args.refine_radius)
    seeds = range(*args.seeds)
    results = []
    for sigma, radius, thr in itertools.product(args.blur, args.view_radius, args.threshold):
        w = ScoreWeights(blur_sigma=sigma, view_radius=radius)
        cfg = base.replace(threshold=thr, weights=w)
        moda = float(np.mean([run_trial(cfg, s).moda for s in seeds]))
        results.append((moda, sigma, radius, thr))
        print(f"blur {sigma:4.1f}  view_radius {radius:2d}  threshold {thr:.2f}  MODA {moda:.4f}", flush=True)
    best = max(results)
    print(f"best: blur {best[1]} view_radius {best[2]} threshold {best[3]} (MODA {best[0]:.4f})")


if __name__ == "__main__":
    main()
