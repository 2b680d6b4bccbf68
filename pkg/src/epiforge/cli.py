"""Command-line interface.

Exit codes: 0 ok, 2 usage, 3 calibration, 4 triangulation, 5 evaluation,
6 clustering. Data goes to ``-o`` files (or stdout); logs go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from epiforge import io, metrics, pss
from epiforge.epipolar import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD
from epiforge.errors import (
    AmbiguousCheirality,
    DegenerateConfiguration,
    DegenerateInput,
    EmptyOverlap,
    InsufficientData,
    InsufficientInliers,
    LengthMismatch,
    NoVisibleJoints,
)
from epiforge.heatmap import read_volume, soft_argmax_2d, soft_argmax_3d
from epiforge.pipeline import calibrate_pairs, chain_extrinsics, normalize_scale, triangulate_sequence
from epiforge.synth import generate_scene

log = logging.getLogger("epiforge")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CALIBRATION = 3
EXIT_TRIANGULATION = 4
EXIT_EVALUATION = 5
EXIT_CLUSTERING = 6


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(obj, path) -> None:
    text = io.dumps(obj)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _rate(s: str) -> float:
    v = float(s)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"rate must be in [0, 1), got {s}")
    return v


def _nonneg(s: str) -> float:
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


# synth


def cmd_synth_generate(args, parser):
    if args.cameras < 2:
        parser.error(f"--cameras: n >= 2 cameras must hold, got {args.cameras}")
    scene = generate_scene(args.cameras, args.frames, args.noise, args.occlusion, args.outliers, args.seed)
    meta = {
        "seed": args.seed,
        "noise_sigma": args.noise,
        "occlusion_rate": args.occlusion,
        "outlier_rate": args.outliers,
    }
    _emit(io.scene_to_dict(scene.cameras, scene.observations, scene.poses_3d, meta), args.output)


# calibration


def _calibrate(scene: io.SceneFile, pool: bool, threshold: float, max_iter: int, seed: int) -> dict:
    intr = [k for k, _ in scene.cameras]
    frame_sets = [None] if pool else [[f] for f in range(scene.n_frames)]
    results = []
    for frames in frame_sets:
        try:
            cals = calibrate_pairs(scene.observations, intr, frames, threshold, max_iter, seed)
            extr = chain_extrinsics([c.pose for c in cals], scene.observations, intr, frames)
        except (InsufficientInliers, DegenerateConfiguration, AmbiguousCheirality) as exc:
            where = "pooled frames" if frames is None else f"frame {frames[0]}"
            raise CommandError(EXIT_CALIBRATION, f"calibration failed on {where}: {exc}") from exc
        results.append(
            {
                "frame": None if frames is None else frames[0],
                "pairs": [io.pair_calibration_to_dict(i, c) for i, c in enumerate(cals)],
                "cameras": [io.camera_to_dict(k, e) for k, e in zip(intr, extr)],
            }
        )
    return {"version": io.CALIB_VERSION, "pooled": pool, "seed": seed, "results": results}


def cmd_calibrate(args, parser):
    scene = io.read_scene(args.scene)
    _emit(_calibrate(scene, args.pool_frames, args.threshold, args.max_iter, args.seed), args.output)


# triangulation


def _cameras_per_frame(report: dict, n_frames: int):
    if report.get("version") != io.CALIB_VERSION:
        raise io.FormatError("not a calibration report")
    res = report["results"]
    if report["pooled"]:
        cams = [io.camera_from_dict(c) for c in res[0]["cameras"]]
        return [cams] * n_frames
    if len(res) != n_frames:
        raise io.FormatError(f"calibration covers {len(res)} frames, scene has {n_frames}")
    return [[io.camera_from_dict(c) for c in r["cameras"]] for r in res]


def cmd_triangulate(args, parser):
    scene = io.read_scene(args.scene)
    geometric = args.median == "geometric"
    if args.extrinsics == "given":
        try:
            results = triangulate_sequence(scene.observations, scene.cameras, args.skip_bad_frames, geometric)
        except NoVisibleJoints as exc:
            raise CommandError(EXIT_TRIANGULATION, str(exc)) from exc
    else:
        if args.calibration:
            per_frame = _cameras_per_frame(io.read_json(args.calibration), scene.n_frames)
        else:
            report = _calibrate(scene, True, args.threshold, args.max_iter, args.seed)
            per_frame = _cameras_per_frame(report, scene.n_frames)
        results = []
        for f in range(scene.n_frames):
            obs_f = [[scene.observations[c][f]] for c in range(len(scene.cameras))]
            try:
                r = triangulate_sequence(obs_f, per_frame[f], args.skip_bad_frames, geometric)[0]
            except NoVisibleJoints as exc:
                raise CommandError(EXIT_TRIANGULATION, f"frame {f}: {exc}") from exc
            if r is not None:
                # scale is unrecoverable from estimated extrinsics
                r = type(r)(normalize_scale(r.pose, args.root), r.per_joint_views, r.reprojection_rmse)
            results.append(r)
    _emit(io.poses_to_dict(results, {"extrinsics": args.extrinsics}), args.output)


# evaluation


def cmd_evaluate(args, parser):
    try:
        preds = io.load_poses(args.pred)
        gts = io.load_poses(args.gt)
    except io.FormatError as exc:
        raise CommandError(EXIT_EVALUATION, str(exc)) from exc
    if len(preds) != len(gts):
        raise CommandError(EXIT_EVALUATION, f"{len(preds)} predicted frames vs {len(gts)} ground-truth frames")
    pairs = [(p, g) for p, g in zip(preds, gts) if p is not None and g is not None]
    if not pairs:
        raise CommandError(EXIT_EVALUATION, "no frame has both a prediction and ground truth")
    for p, g in pairs:
        if p.num_joints != g.num_joints:
            raise CommandError(EXIT_EVALUATION, f"joint count mismatch: {p.num_joints} vs {g.num_joints}")
    if args.root is not None:
        rooted = [(p, g) for p, g in pairs if p.visibility[args.root] and g.visibility[args.root]]
        if len(rooted) < len(pairs):
            log.warning("%d frame(s) lack root joint %d and were skipped", len(pairs) - len(rooted), args.root)
        pairs = rooted
    if not pairs:
        raise CommandError(EXIT_EVALUATION, f"no frame has root joint {args.root} in both poses")
    P, G = zip(*pairs)
    try:
        rep = metrics.evaluate(P, G, args.pck_threshold, args.root)
    except (EmptyOverlap, DegenerateInput) as exc:
        raise CommandError(EXIT_EVALUATION, str(exc)) from exc
    out = rep.to_dict()
    out["skipped_frames"] = len(preds) - len(pairs)
    if args.pss_model:
        model = io.cluster_model_from_dict(io.read_json(args.pss_model))
        full = [(p, g) for p, g in pairs if p.visibility.all() and g.visibility.all()]
        if not full:
            raise CommandError(EXIT_EVALUATION, "no fully visible pose pair to score with PSS")
        if model.dim != 3 * full[0][0].num_joints:
            raise CommandError(EXIT_EVALUATION, f"PSS model dimension {model.dim} does not fit {full[0][0].num_joints} joints")
        r = pss.mpss([p for p, _ in full], [g for _, g in full], model, args.root)
        out[f"mpss@{model.k}"] = r.mpss
        out["pss_poses"] = len(full)
    _emit(out, args.output)


# pss


def _gt_poses(path):
    return [p for p in io.load_poses(path) if p is not None]


def cmd_pss_fit(args, parser):
    try:
        model = pss.fit_clusters(_gt_poses(args.gt), args.k, args.seed, args.root)
    except (InsufficientData, DegenerateInput) as exc:
        raise CommandError(EXIT_CLUSTERING, str(exc)) from exc
    _emit(io.cluster_model_to_dict(model), args.output)


def cmd_pss_stability(args, parser):
    try:
        iou = pss.stability_iou(_gt_poses(args.gt), args.k, args.runs, args.seed, args.root)
    except (InsufficientData, DegenerateInput) as exc:
        raise CommandError(EXIT_CLUSTERING, str(exc)) from exc
    _emit({"k": args.k, "runs": args.runs, "seed": args.seed, "mean_iou": iou}, args.output)


def cmd_pss_score(args, parser):
    model = io.cluster_model_from_dict(io.read_json(args.model))
    preds, gts = io.load_poses(args.pred), io.load_poses(args.gt)
    if len(preds) != len(gts):
        raise CommandError(EXIT_EVALUATION, f"{len(preds)} predicted frames vs {len(gts)} ground-truth frames")
    # PSS needs every joint; frames with gaps are skipped and counted
    full = [
        (p, g)
        for p, g in zip(preds, gts)
        if p is not None and g is not None and p.visibility.all() and g.visibility.all()
    ]
    if not full:
        raise CommandError(EXIT_EVALUATION, "no fully visible pose pair to score")
    try:
        rep = pss.mpss([p for p, _ in full], [g for _, g in full], model, args.root)
    except (LengthMismatch, DegenerateInput) as exc:
        raise CommandError(EXIT_EVALUATION, str(exc)) from exc
    out = rep.to_dict()
    out["skipped_frames"] = len(preds) - len(full)
    _emit(out, args.output)


# heatmaps


def cmd_decode(args, parser):
    vol = read_volume(args.volume)
    dec = soft_argmax_3d(vol, args.temperature) if args.dims == 3 else soft_argmax_2d(vol, args.temperature)
    _emit({"dims": args.dims, "temperature": args.temperature, "joints": np.asarray(dec.joints).tolist()}, args.output)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="epiforge", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sy = sub.add_parser("synth", help="synthetic scenes")
    sysub = sy.add_subparsers(dest="synth_command", required=True)
    g = sysub.add_parser("generate", help="write a synthetic scene file")
    g.add_argument("--cameras", type=int, default=4)
    g.add_argument("--frames", type=_positive_int, default=100)
    g.add_argument("--noise", type=_nonneg, default=0.0, help="pixel noise sigma")
    g.add_argument("--occlusion", type=_rate, default=0.0)
    g.add_argument("--outliers", type=_rate, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", default="-")
    g.set_defaults(func=cmd_synth_generate)

    def ransac_flags(sp):
        sp.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="Sampson threshold (px)")
        sp.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER)
        sp.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("calibrate", help="relative camera poses from joint correspondences")
    c.add_argument("scene")
    c.add_argument("--pool-frames", action="store_true", help="pool correspondences across frames")
    ransac_flags(c)
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("triangulate", help="3D poses from a scene")
    t.add_argument("scene")
    t.add_argument("--extrinsics", choices=("given", "estimated"), default="given")
    t.add_argument("--calibration", help="calibration report to use with --extrinsics estimated")
    t.add_argument("--skip-bad-frames", action="store_true")
    t.add_argument("--median", choices=("vector", "geometric"), default="vector")
    t.add_argument("--root", type=int, default=0)
    ransac_flags(t)
    t.add_argument("-o", "--output", default="-")
    t.set_defaults(func=cmd_triangulate)

    e = sub.add_parser("evaluate", help="pose metrics and optional mPSS")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--pss-model")
    e.add_argument("--pck-threshold", type=float, default=metrics.DEFAULT_PCK_THRESHOLD)
    e.add_argument("--root", type=int, default=0)
    e.add_argument("-o", "--output", default="-")
    e.set_defaults(func=cmd_evaluate)

    ps = sub.add_parser("pss", help="Pose Structure Score reference models")
    pssub = ps.add_subparsers(dest="pss_command", required=True)
    f = pssub.add_parser("fit")
    f.add_argument("--gt", required=True)
    f.add_argument("-k", type=int, default=50)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--root", type=int, default=0)
    f.add_argument("-o", "--output", default="-")
    f.set_defaults(func=cmd_pss_fit)
    s = pssub.add_parser("stability")
    s.add_argument("--gt", required=True)
    s.add_argument("-k", type=int, default=50)
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--root", type=int, default=0)
    s.add_argument("-o", "--output", default="-")
    s.set_defaults(func=cmd_pss_stability)
    sc = pssub.add_parser("score")
    sc.add_argument("--pred", required=True)
    sc.add_argument("--gt", required=True)
    sc.add_argument("--model", required=True)
    sc.add_argument("--root", type=int, default=0)
    sc.add_argument("-o", "--output", default="-")
    sc.set_defaults(func=cmd_pss_score)

    d = sub.add_parser("decode", help="soft-argmax decode a heatmap volume file")
    d.add_argument("volume")
    d.add_argument("--temperature", type=float, default=1.0)
    d.add_argument("--dims", type=int, choices=(2, 3), default=3)
    d.add_argument("-o", "--output", default="-")
    d.set_defaults(func=cmd_decode)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args, parser)
    except CommandError as exc:
        print(f"epiforge: error: {exc}", file=sys.stderr)
        return exc.code
    except io.FormatError as exc:
        print(f"epiforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
