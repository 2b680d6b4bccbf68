"""JSON file formats: camera calibration, scenes, pose files, cluster models.

Floats are written with Python's shortest round-trip ``repr`` so parsing a
file and writing it again reproduces it byte for byte. Invisible joints are
stored as ``null`` coordinates.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from epiforge.camera import CameraExtrinsics, CameraIntrinsics, Pose2D, Pose3D
from epiforge.pss import ClusterModel
from epiforge.triangulation import TriangulatedPose

SCENE_VERSION = "epiforge-scene/1"
POSES_VERSION = "epiforge-poses/1"
CALIB_VERSION = "epiforge-calibration/1"
CLUSTER_VERSION = "epiforge-clusters/1"


class FormatError(ValueError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _floats(a) -> list:
    return [[float(v) for v in row] for row in np.asarray(a)]


def camera_to_dict(intr: CameraIntrinsics, extr: CameraExtrinsics) -> dict:
    return {
        "fx": float(intr.fx),
        "fy": float(intr.fy),
        "cx": float(intr.cx),
        "cy": float(intr.cy),
        "R": _floats(extr.R),
        "T": [float(v) for v in extr.T],
    }


def camera_from_dict(d: dict):
    try:
        intr = CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))
        extr = CameraExtrinsics(np.array(d["R"], dtype=float), np.array(d["T"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad camera record: {exc}") from exc
    return intr, extr


def _joints_to_list(joints, visible) -> list:
    return [[float(v) for v in p] if vis else None for p, vis in zip(joints, visible)]


def _joints_from_list(rows, dim):
    J = len(rows)
    out = np.full((J, dim), np.nan)
    vis = np.zeros(J, dtype=bool)
    for j, r in enumerate(rows):
        if r is None:
            continue
        if len(r) != dim:
            raise FormatError(f"joint {j} has {len(r)} coordinates, expected {dim}")
        out[j] = r
        vis[j] = True
    return out, vis


def pose2d_to_dict(p: Pose2D) -> list:
    return _joints_to_list(p.joints, p.visibility)


def pose2d_from_dict(rows) -> Pose2D:
    return Pose2D(*_joints_from_list(rows, 2))


def pose3d_to_list(p: Pose3D) -> list:
    return _joints_to_list(p.joints, p.visibility)


def pose3d_from_list(rows) -> Pose3D:
    return Pose3D(*_joints_from_list(rows, 3))


# scenes


def scene_to_dict(cameras, observations, gt_poses=None, meta=None) -> dict:
    """``observations[c][f]``; frames are stored frame-major."""
    n_frames = len(observations[0])
    d = {
        "version": SCENE_VERSION,
        "cameras": [camera_to_dict(k, e) for k, e in cameras],
        "frames": [[pose2d_to_dict(observations[c][f]) for c in range(len(cameras))] for f in range(n_frames)],
    }
    if gt_poses is not None:
        d["gt_poses_3d"] = [pose3d_to_list(p) for p in gt_poses]
    if meta:
        d["meta"] = meta
    return d


class SceneFile:
    def __init__(self, cameras, observations, gt_poses=None, meta=None):
        self.cameras = cameras
        self.observations = observations
        self.gt_poses = gt_poses
        self.meta = meta or {}

    @property
    def n_frames(self) -> int:
        return len(self.observations[0])

    @property
    def num_joints(self) -> int:
        return self.observations[0][0].num_joints


def scene_from_dict(d: dict) -> SceneFile:
    if d.get("version") != SCENE_VERSION:
        raise FormatError(f"not a scene file (version {d.get('version')!r})")
    cameras = [camera_from_dict(c) for c in d["cameras"]]
    if len(cameras) < 2:
        raise FormatError("a scene needs at least 2 cameras")
    frames = d["frames"]
    if not frames:
        raise FormatError("scene has no frames")
    obs = [[None] * len(frames) for _ in cameras]
    J = None
    for f, block in enumerate(frames):
        if len(block) != len(cameras):
            raise FormatError(f"frame {f} has {len(block)} views for {len(cameras)} cameras")
        for c, rows in enumerate(block):
            p = pose2d_from_dict(rows)
            if J is None:
                J = p.num_joints
            elif p.num_joints != J:
                raise FormatError(f"frame {f} camera {c}: {p.num_joints} joints, expected {J}")
            obs[c][f] = p
    gt = None
    if "gt_poses_3d" in d:
        gt = [pose3d_from_list(r) for r in d["gt_poses_3d"]]
    return SceneFile(cameras, obs, gt, d.get("meta"))


def read_scene(path) -> SceneFile:
    return scene_from_dict(read_json(path))


# pose files


def poses_to_dict(results, meta=None) -> dict:
    """``results`` holds TriangulatedPose, bare Pose3D, or None for skipped frames."""
    out = []
    for r in results:
        if r is None:
            out.append(None)
        elif isinstance(r, TriangulatedPose):
            out.append(
                {
                    "joints": pose3d_to_list(r.pose),
                    "views": [int(v) for v in r.per_joint_views],
                    "reprojection_rmse": float(r.reprojection_rmse),
                }
            )
        else:
            out.append({"joints": pose3d_to_list(r)})
    d = {"version": POSES_VERSION, "poses": out}
    if meta:
        d["meta"] = meta
    return d


def poses_from_dict(d: dict) -> list:
    """Inverse of :func:`poses_to_dict`; entries with view counts come back as TriangulatedPose."""
    if d.get("version") != POSES_VERSION:
        raise FormatError(f"not a pose file (version {d.get('version')!r})")
    out = []
    for rec in d["poses"]:
        if rec is None:
            out.append(None)
            continue
        pose = pose3d_from_list(rec["joints"])
        if "views" in rec:
            out.append(TriangulatedPose(pose, np.array(rec["views"], dtype=int), float(rec["reprojection_rmse"])))
        else:
            out.append(pose)
    return out


def load_poses(path) -> list:
    """Pose3D list from a pose file, or the ground truth of a scene file."""
    d = read_json(path)
    if d.get("version") == SCENE_VERSION:
        scene = scene_from_dict(d)
        if scene.gt_poses is None:
            raise FormatError(f"{path}: scene carries no ground-truth poses")
        return scene.gt_poses
    return [r.pose if isinstance(r, TriangulatedPose) else r for r in poses_from_dict(d)]


# cluster models


def cluster_model_to_dict(m: ClusterModel) -> dict:
    return {
        "version": CLUSTER_VERSION,
        "k": m.k,
        "seed": int(m.seed),
        "D": m.dim,
        "inertia": float(m.inertia),
        "centroids": _floats(m.centroids),
    }


def cluster_model_from_dict(d: dict) -> ClusterModel:
    try:
        C = np.array(d["centroids"], dtype=float)
        if C.shape != (int(d["k"]), int(d["D"])):
            raise FormatError(f"centroid matrix {C.shape} disagrees with k={d['k']}, D={d['D']}")
        return ClusterModel(C, seed=int(d["seed"]), inertia=float(d.get("inertia", 0.0)))
    except KeyError as exc:
        raise FormatError(f"cluster model lacks {exc}") from exc


# calibration reports


def pair_calibration_to_dict(i: int, cal) -> dict:
    return {
        "pair": [i, i + 1],
        "F": _floats(cal.ransac.F.F),
        "E": _floats(cal.E.E),
        "R": _floats(cal.pose.R),
        "t": [float(v) for v in cal.pose.t],
        "inliers": cal.ransac.num_inliers,
        "correspondences": int(cal.ransac.inliers.size),
        "iterations": int(cal.ransac.iterations),
        "threshold": float(cal.ransac.threshold),
        "cheirality_counts": [int(v) for v in cal.cheirality],
    }
