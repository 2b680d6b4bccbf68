"""Rig-level glue: calibrate consecutive camera pairs from joints, chain them
into one frame, and triangulate whole sequences."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from epiforge.camera import CameraExtrinsics, Pose3D, projection_matrix
from epiforge.epipolar import DEFAULT_MAX_ITER, DEFAULT_THRESHOLD, PairCalibration, calibrate_pair
from epiforge.errors import InsufficientInliers, NoVisibleJoints, ParallelRays
from epiforge.triangulation import TriangulatedPose, triangulate_dlt, triangulate_pose

log = logging.getLogger(__name__)


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("EPIFORGE_THREADS", "1")))
    except ValueError:
        return 1


def pair_correspondences(observations, i: int, frames=None):
    """Pixel pairs for joints visible in both camera i and camera i+1.

    ``observations[c][f]`` is a Pose2D. Returns ``(x1, x2)`` as (N, 2) arrays.
    """
    a, b = observations[i], observations[i + 1]
    frames = range(len(a)) if frames is None else frames
    x1, x2 = [], []
    for f in frames:
        m = a[f].visibility & b[f].visibility
        x1.append(a[f].joints[m])
        x2.append(b[f].joints[m])
    if not x1:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(x1), np.concatenate(x2)


def calibrate_pairs(observations, intrinsics, frames=None, threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    """One PairCalibration per consecutive camera pair over the given frames."""
    out = []
    for i in range(len(observations) - 1):
        x1, x2 = pair_correspondences(observations, i, frames)
        if x1.shape[0] < 8:
            raise InsufficientInliers(f"pair ({i}, {i + 1}) has {x1.shape[0]} correspondences, need 8")
        out.append(calibrate_pair(x1, x2, intrinsics[i], intrinsics[i + 1], threshold, max_iter, seed))
    return out


def chain_extrinsics(pair_poses, observations, intrinsics, frames=None) -> list[CameraExtrinsics]:
    """Compose consecutive relative poses into extrinsics in the first camera's frame.

    The first baseline has unit length. Each later baseline is rescaled so
    that joints seen by three consecutive cameras get the same depth in the
    shared middle camera (median ratio).
    """
    n = len(pair_poses) + 1
    Rs = [np.eye(3)]
    ts = [np.zeros(3)]
    Rs.append(pair_poses[0].R @ Rs[0])
    ts.append(pair_poses[0].R @ ts[0] + pair_poses[0].t)
    for i in range(1, n - 1):
        rel = pair_poses[i]
        frames_i = range(len(observations[0])) if frames is None else frames
        P_prev = intrinsics[i - 1].K @ np.hstack([Rs[i - 1], ts[i - 1][:, None]])
        P_cur = intrinsics[i].K @ np.hstack([Rs[i], ts[i][:, None]])
        P_loc0 = intrinsics[i].K @ np.hstack([np.eye(3), np.zeros((3, 1))])
        P_loc1 = intrinsics[i + 1].K @ np.hstack([rel.R, rel.t[:, None]])
        ratios = []
        for f in frames_i:
            a, b, c = observations[i - 1][f], observations[i][f], observations[i + 1][f]
            for j in np.flatnonzero(a.visibility & b.visibility & c.visibility):
                try:
                    Xw = triangulate_dlt(a.joints[j], b.joints[j], P_prev, P_cur)
                    Xl = triangulate_dlt(b.joints[j], c.joints[j], P_loc0, P_loc1)
                except ParallelRays:
                    continue
                za = (Rs[i] @ Xw + ts[i])[2]
                zb = Xl[2]
                if za > 0 and zb > 0:
                    ratios.append(za / zb)
        if not ratios:
            raise InsufficientInliers(f"no joint seen by cameras {i - 1}, {i}, {i + 1}; cannot fix baseline scale")
        s = float(np.median(ratios))
        Rs.append(rel.R @ Rs[i])
        ts.append(rel.R @ ts[i] + s * rel.t)
    return [CameraExtrinsics.from_rt(R, t) for R, t in zip(Rs, ts)]


def normalize_scale(pose: Pose3D, root: int = 0) -> Pose3D:
    """Root-centred pose scaled to unit Frobenius norm over visible joints.

    Falls back to the centroid of the visible joints when the root itself
    was not reconstructed.
    """
    if pose.visibility[root]:
        origin = pose.joints[root]
    else:
        log.warning("root joint %d missing; centring on the visible-joint centroid", root)
        origin = pose.joints[pose.visibility].mean(axis=0)
    J = pose.joints - origin
    n = np.linalg.norm(J[pose.visibility])
    return Pose3D(J / n, pose.visibility)


def triangulate_sequence(observations, cameras, skip_bad_frames=False, geometric_median=False):
    """Triangulate every frame; returns a list with ``None`` for skipped frames.

    ``cameras`` is a list of (CameraIntrinsics, CameraExtrinsics).
    Frames are processed with up to ``EPIFORGE_THREADS`` threads; output
    order always follows the frame index.
    """
    Ps = [projection_matrix(k, e) for k, e in cameras]
    n_frames = len(observations[0])

    def run(f):
        views = [(observations[c][f], Ps[c]) for c in range(len(cameras))]
        try:
            return triangulate_pose(views, geometric_median=geometric_median)
        except NoVisibleJoints:
            if skip_bad_frames:
                log.warning("frame %d: no triangulable joints, skipped", f)
                return None
            raise NoVisibleJoints(f"frame {f}: no triangulable joints") from None

    workers = max_threads()
    if workers == 1:
        return [run(f) for f in range(n_frames)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, range(n_frames)))


def estimated_cameras(observations, intrinsics, frames=None, threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0):
    cals: list[PairCalibration] = calibrate_pairs(observations, intrinsics, frames, threshold, max_iter, seed)
    extr = chain_extrinsics([c.pose for c in cals], observations, intrinsics, frames)
    return list(zip(intrinsics, extr)), cals


def triangulated_poses(results: list[TriangulatedPose | None]) -> list[Pose3D | None]:
    return [None if r is None else r.pose for r in results]
