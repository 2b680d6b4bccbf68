"""Multi-view geometric self-supervision toolkit for 3D human pose.

Relative camera recovery from joint correspondences, optimal two-view
triangulation, soft-argmax heatmap decoding, pose metrics and the
Pose Structure Score.
"""

from epiforge.errors import (
    AmbiguousCheirality,
    DegenerateConfiguration,
    DegenerateInput,
    DegenerateProjection,
    EmptyInput,
    EmptyOverlap,
    EpiforgeError,
    InsufficientData,
    InsufficientInliers,
    LengthMismatch,
    NoVisibleJoints,
    ParallelRays,
)
from epiforge.camera import CameraExtrinsics, CameraIntrinsics, Pose2D, Pose3D, project, project_pose

__version__ = "0.1.0"

__all__ = [
    "AmbiguousCheirality",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "DegenerateConfiguration",
    "DegenerateInput",
    "DegenerateProjection",
    "EmptyInput",
    "EmptyOverlap",
    "EpiforgeError",
    "InsufficientData",
    "InsufficientInliers",
    "LengthMismatch",
    "NoVisibleJoints",
    "ParallelRays",
    "Pose2D",
    "Pose3D",
    "project",
    "project_pose",
]
