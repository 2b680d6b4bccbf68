"""Triangulation error versus pixel noise, with known and estimated extrinsics."""

import argparse

import numpy as np

from epiforge.metrics import mpjpe, pmpjpe
from epiforge.pipeline import estimated_cameras, triangulate_sequence
from epiforge.synth import generate_poses, generate_rig, observe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cameras", type=int, default=4)
    ap.add_argument("--frames", type=int, default=100)
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0, 4.0, 8.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rig = generate_rig(args.cameras, args.seed)
    poses = generate_poses(args.frames, seed=args.seed + 1)
    intr = [k for k, _ in rig]
    print(f"{'sigma px':>8} {'MPJPE given':>12} {'PMPJPE given':>13} {'PMPJPE est':>11}")
    for sigma in args.sigmas:
        obs, _ = observe(poses, rig, noise_sigma=sigma, seed=args.seed + 2)
        given = triangulate_sequence(obs, rig)
        cams, _ = estimated_cameras(obs, intr, seed=args.seed)
        est = triangulate_sequence(obs, cams)
        m = np.mean([mpjpe(r.pose, g, root=None) for r, g in zip(given, poses)])
        pg = np.mean([pmpjpe(r.pose, g) for r, g in zip(given, poses)])
        pe = np.mean([pmpjpe(r.pose, g) for r, g in zip(est, poses)])
        print(f"{sigma:8.2f} {m:12.3f} {pg:13.3f} {pe:11.3f}")


if __name__ == "__main__":
    main()
