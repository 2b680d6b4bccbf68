"""Counts how often the aligned metrics exceed the unaligned ones.

The scale and similarity fits minimise squared joint error, so the ordering
pmpjpe <= nmpjpe <= mpjpe holds for root-mean-square error but not always for
mean joint distance. This prints the violation rate for both.
"""

import argparse

import numpy as np

from epiforge.camera import Pose3D
from epiforge.metrics import _overlap, mpjpe, nmpjpe, optimal_scale, pmpjpe, similarity_align


def rms(d):
    return float(np.sqrt(np.mean(np.sum(d**2, axis=1))))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--noise", type=float, default=0.0, help="if > 0, pred = gt + noise instead of an unrelated pose")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    mean_viol = [0, 0]
    rms_viol = [0, 0]
    for _ in range(args.pairs):
        g = Pose3D(rng.normal(scale=400.0, size=(17, 3)))
        if args.noise > 0:
            p = Pose3D(g.joints + rng.normal(scale=args.noise, size=(17, 3)))
        else:
            p = Pose3D(rng.normal(scale=400.0, size=(17, 3)))
        m, n, pm = mpjpe(p, g), nmpjpe(p, g), pmpjpe(p, g)
        mean_viol[0] += n > m + 1e-9
        mean_viol[1] += pm > n + 1e-9
        pc, gc = _overlap(p, g, 0)
        r_m = rms(pc - gc)
        r_n = rms(optimal_scale(pc, gc) * pc - gc)
        pu, gu = _overlap(p, g, None)
        r_p = rms(similarity_align(pu, gu) - gu)
        rms_viol[0] += r_n > r_m + 1e-9
        rms_viol[1] += r_p > r_n + 1e-9
    print(f"mean distance: nmpjpe>mpjpe {mean_viol[0]}/{args.pairs}, pmpjpe>nmpjpe {mean_viol[1]}/{args.pairs}")
    print(f"rms distance:  n>m {rms_viol[0]}/{args.pairs}, p>n {rms_viol[1]}/{args.pairs}")


if __name__ == "__main__":
    main()
