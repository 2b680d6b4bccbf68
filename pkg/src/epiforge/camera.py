"""Pinhole camera model and pose containers.

Extrinsics follow the ``K [R | RT]`` block literally: a world point ``X`` maps
to camera coordinates ``R (X + T)``, so the camera centre sits at ``-T`` in
the world frame. Do not mix this with the more common ``[R | t]`` form; use
:meth:`CameraExtrinsics.from_rt` / :attr:`CameraExtrinsics.t` to convert.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from epiforge.errors import DegenerateProjection

_DEPTH_EPS = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class CameraExtrinsics:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        T = np.array(self.T, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("R must be a proper rotation (R^T R = I, det R = +1)")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def identity(cls) -> CameraExtrinsics:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rt(cls, R, t) -> CameraExtrinsics:
        """Build from the ``x_cam = R X + t`` convention."""
        R = np.asarray(R, dtype=float)
        return cls(R, R.T @ np.asarray(t, dtype=float))

    @property
    def t(self) -> np.ndarray:
        """Translation in the ``x_cam = R X + t`` convention (``t = R T``)."""
        return self.R @ self.T

    @property
    def matrix(self) -> np.ndarray:
        """3x4 block ``[R | RT]``."""
        return np.hstack([self.R, (self.R @ self.T)[:, None]])

    @property
    def center(self) -> np.ndarray:
        return -self.T

    def to_camera(self, X: np.ndarray) -> np.ndarray:
        """World points (..., 3) to camera coordinates."""
        return (np.asarray(X, dtype=float) + self.T) @ self.R.T


def projection_matrix(intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """3x4 matrix ``K [R | RT]``."""
    return intr.K @ extr.matrix


def _check_pose_arrays(joints, visibility, dim):
    joints = np.array(joints, dtype=float)
    if joints.ndim != 2 or joints.shape[1] != dim:
        raise ValueError(f"joints must have shape (J, {dim}), got {joints.shape}")
    J = joints.shape[0]
    if J < 2:
        raise ValueError("a pose needs at least 2 joints")
    if visibility is None:
        visibility = np.isfinite(joints).all(axis=1)
    visibility = np.array(visibility, dtype=bool).reshape(-1)
    if visibility.shape[0] != J:
        raise ValueError("visibility length does not match joint count")
    if not np.isfinite(joints[visibility]).all():
        raise ValueError("visible joints must be finite")
    joints.setflags(write=False)
    visibility.setflags(write=False)
    return joints, visibility


@dataclass(frozen=True)
class Pose3D:
    """J joints in millimetres with per-joint visibility."""

    joints: np.ndarray
    visibility: np.ndarray = field(default=None)

    def __post_init__(self):
        joints, vis = _check_pose_arrays(self.joints, self.visibility, 3)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visibility", vis)

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]


@dataclass(frozen=True)
class Pose2D:
    """J joints in pixels with per-joint visibility."""

    joints: np.ndarray
    visibility: np.ndarray = field(default=None)

    def __post_init__(self):
        joints, vis = _check_pose_arrays(self.joints, self.visibility, 2)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visibility", vis)

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]


def project(point, intr: CameraIntrinsics, extr: CameraExtrinsics) -> tuple[np.ndarray, float]:
    """Project one world point; returns ``(pixel, depth)``.

    Depth is the third homogeneous coordinate of ``[R | RT] [X 1]`` and keeps
    its sign, so points behind the camera come back with negative depth.
    """
    point = np.asarray(point, dtype=float).reshape(3)
    if not np.isfinite(point).all():
        raise ValueError("point must be finite")
    cam = extr.matrix @ np.append(point, 1.0)
    depth = float(cam[2])
    if abs(depth) < _DEPTH_EPS:
        raise DegenerateProjection(f"depth {depth!r} is on the principal plane")
    pixel = np.array([intr.fx * cam[0] / depth + intr.cx, intr.fy * cam[1] / depth + intr.cy])
    return pixel, depth


def project_pose(pose: Pose3D, intr: CameraIntrinsics, extr: CameraExtrinsics) -> Pose2D:
    J = pose.num_joints
    pixels = np.full((J, 2), np.nan)
    visible = np.zeros(J, dtype=bool)
    for j in range(J):
        if not pose.visibility[j]:
            continue
        try:
            px, depth = project(pose.joints[j], intr, extr)
        except DegenerateProjection:
            continue
        if depth > 0:
            pixels[j] = px
            visible[j] = True
    return Pose2D(pixels, visible)
