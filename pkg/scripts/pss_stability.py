"""Clustering stability (matched IOU across seeds) and mPSS spread across reference models."""

import argparse
import time

import numpy as np

from epiforge.camera import Pose3D
from epiforge.pss import fit_clusters, mpss, stability_iou
from epiforge.synth import template_population


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--templates", type=int, default=50)
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("-k", type=int, nargs="+", default=[50, 100])
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--models", type=int, default=5)
    ap.add_argument("--pred-noise", type=float, default=150.0, help="mm of joint noise for the fixed predictor")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    poses, _ = template_population(args.templates, args.samples, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    preds = [Pose3D(p.joints + rng.normal(scale=args.pred_noise, size=p.joints.shape)) for p in poses]
    for k in args.k:
        t0 = time.perf_counter()
        iou = stability_iou(poses, k, args.runs, seed=args.seed)
        scores = [mpss(preds, poses, fit_clusters(poses, k, seed=s)).mpss for s in range(args.models)]
        print(
            f"k={k:4d}  IOU {iou:.3f}  mPSS@{k} {100 * np.mean(scores):.2f}% "
            f"(spread {100 * (max(scores) - min(scores)):.2f} pp)  {time.perf_counter() - t0:.1f} s"
        )


if __name__ == "__main__":
    main()
