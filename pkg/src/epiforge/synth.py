"""Synthetic multi-camera scenes with known ground truth.

World frame: z up, origin at pelvis height in the middle of the capture
area. Cameras sit on a ring around the origin, slightly above it, and look
at the origin.

Randomness: every function takes an integer seed. Per-frame streams are
``numpy.random.Generator(PCG64(SeedSequence([seed, frame])))`` so any frame
can be regenerated on its own, in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from epiforge.camera import CameraExtrinsics, CameraIntrinsics, Pose2D, Pose3D, project_pose

NUM_JOINTS = 17
IMAGE_SIZE = (1024, 1024)
DEFAULT_INTRINSICS = CameraIntrinsics(fx=1146.0, fy=1146.0, cx=512.0, cy=512.0)

# Human3.6M-style 17-joint tree
PARENTS = np.array([-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15])
JOINT_NAMES = (
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine",
    "thorax", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
    "r_elbow", "r_wrist",
)  # fmt: skip
# rest-pose bone offsets from parent, millimetres, body facing +x
BONE_OFFSETS = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, -130.0, 0.0],
        [0.0, 0.0, -450.0],
        [0.0, 0.0, -440.0],
        [0.0, 130.0, 0.0],
        [0.0, 0.0, -450.0],
        [0.0, 0.0, -440.0],
        [0.0, 0.0, 230.0],
        [0.0, 0.0, 250.0],
        [20.0, 0.0, 110.0],
        [0.0, 0.0, 110.0],
        [0.0, 150.0, -20.0],
        [0.0, 0.0, -280.0],
        [0.0, 0.0, -250.0],
        [0.0, -150.0, -20.0],
        [0.0, 0.0, -280.0],
        [0.0, 0.0, -250.0],
    ]
)
BONE_LENGTHS = np.linalg.norm(BONE_OFFSETS, axis=1)


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def look_at(center, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> CameraExtrinsics:
    """Extrinsics of a camera at ``center`` looking at ``target`` (x right, y down)."""
    center = np.asarray(center, dtype=float)
    f = np.asarray(target, dtype=float) - center
    f /= np.linalg.norm(f)
    r = np.cross(f, up)
    r /= np.linalg.norm(r)
    d = np.cross(f, r)
    R = np.stack([r, d, f])
    return CameraExtrinsics(R, -center)


def generate_rig(n_cameras: int, seed: int = 0, intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS):
    """Ring of ``n_cameras`` cameras, radius 3-5 m, consecutive spacing <= 360/n degrees."""
    if n_cameras < 2:
        raise ValueError(f"n >= 2 cameras required, got {n_cameras}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x716])))
    base = rng.uniform(0.0, 2.0 * np.pi)
    step = 2.0 * np.pi / n_cameras
    cams = []
    angle = base
    for i in range(n_cameras):
        if i > 0:
            angle += rng.uniform(0.5, 0.9) * step
        radius = rng.uniform(3000.0, 5000.0)
        height = rng.uniform(200.0, 500.0)
        C = np.array([radius * np.cos(angle), radius * np.sin(angle), height])
        cams.append((intrinsics, look_at(C)))
    return cams


def sample_joint_rotations(rng: np.random.Generator, max_angle_deg: float = 35.0) -> np.ndarray:
    """Local joint rotations as rotation vectors (J, 3); row 0 is the global orientation."""
    axes = rng.normal(size=(NUM_JOINTS, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.deg2rad(max_angle_deg) * rng.uniform(-1.0, 1.0, size=NUM_JOINTS)
    rv = axes * angles[:, None]
    rv[0] = [0.0, 0.0, rng.uniform(-np.pi, np.pi)]
    return rv


def pose_from_rotations(rotvecs: np.ndarray, root=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Forward kinematics on the template skeleton; returns (J, 3) joints."""
    local = Rotation.from_rotvec(rotvecs).as_matrix()
    G = np.empty_like(local)
    X = np.empty((NUM_JOINTS, 3))
    G[0] = local[0]
    X[0] = root
    for j in range(1, NUM_JOINTS):
        p = PARENTS[j]
        G[j] = G[p] @ local[j]
        X[j] = X[p] + G[j] @ BONE_OFFSETS[j]
    return X


def generate_poses(n_frames: int, J: int = NUM_JOINTS, seed: int = 0, max_angle_deg: float = 35.0, max_offset=300.0):
    """Random skeleton poses with fixed bone lengths, pelvis within ``max_offset`` of the origin."""
    if J != NUM_JOINTS:
        raise ValueError(f"only the {NUM_JOINTS}-joint skeleton is available")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    out = []
    for f in range(n_frames):
        rng = frame_rng(seed, f)
        rv = sample_joint_rotations(rng, max_angle_deg)
        root = np.append(rng.uniform(-max_offset, max_offset, size=2), rng.uniform(-50.0, 50.0))
        out.append(Pose3D(pose_from_rotations(rv, root)))
    return out


def template_population(n_templates: int, n_samples: int, seed: int = 0, jitter_deg: float = 4.0):
    """Poses drawn around ``n_templates`` canonical poses by small joint-angle jitter.

    Returns ``(poses, template_index)``.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x7E4])))
    templates = [sample_joint_rotations(rng, 60.0) for _ in range(n_templates)]
    labels = np.arange(n_samples) % n_templates
    poses = []
    for i, t in enumerate(labels):
        r = frame_rng(seed, i)
        rv = Rotation.from_rotvec(templates[t])
        jitter = Rotation.from_rotvec(np.deg2rad(jitter_deg) * r.normal(size=(NUM_JOINTS, 3)) / np.sqrt(3.0))
        root = np.append(r.uniform(-300.0, 300.0, size=2), 0.0)
        poses.append(Pose3D(pose_from_rotations((rv * jitter).as_rotvec(), root)))
    return poses, labels


def observe(
    poses,
    cameras,
    noise_sigma: float = 0.0,
    occlusion_rate: float = 0.0,
    outlier_rate: float = 0.0,
    seed: int = 0,
    image_size=IMAGE_SIZE,
):
    """Project poses into every camera with noise, outliers and occlusion.

    Returns ``(observations, outlier_mask)``; ``observations[c][f]`` is the
    Pose2D of frame f in camera c, ``outlier_mask[c][f]`` flags joints
    replaced by uniform random pixels.
    """
    for name, v in (("occlusion_rate", occlusion_rate), ("outlier_rate", outlier_rate)):
        if not 0.0 <= v < 1.0:
            raise ValueError(f"{name} must be in [0, 1), got {v}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    n_cam = len(cameras)
    obs = [[None] * len(poses) for _ in range(n_cam)]
    outl = [[None] * len(poses) for _ in range(n_cam)]
    for f, pose in enumerate(poses):
        rng = frame_rng(seed, f)
        for c, (intr, extr) in enumerate(cameras):
            p2 = project_pose(pose, intr, extr)
            J = p2.num_joints
            xy = p2.joints.copy()
            vis = p2.visibility.copy()
            noise = rng.normal(scale=1.0, size=(J, 2))
            is_out = rng.random(J) < outlier_rate
            rand_px = rng.uniform((0.0, 0.0), image_size, size=(J, 2))
            occluded = rng.random(J) < occlusion_rate
            if noise_sigma > 0:
                xy = xy + noise_sigma * noise
            xy[is_out] = rand_px[is_out]
            vis = vis & ~occluded
            is_out &= vis
            xy[~vis] = np.nan
            obs[c][f] = Pose2D(xy, vis)
            outl[c][f] = is_out
    return obs, outl


@dataclass(frozen=True)
class SyntheticScene:
    cameras: list
    poses_3d: list
    observations: list
    noise_sigma: float = 0.0
    occlusion_rate: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0
    outlier_mask: list = field(default=None, repr=False)

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    @property
    def n_frames(self) -> int:
        return len(self.poses_3d)

    def frame_views(self, f: int) -> list:
        return [self.observations[c][f] for c in range(self.n_cameras)]


def generate_scene(
    n_cameras: int = 4,
    n_frames: int = 100,
    noise_sigma: float = 0.0,
    occlusion_rate: float = 0.0,
    outlier_rate: float = 0.0,
    seed: int = 0,
) -> SyntheticScene:
    """Rig, poses and observations from one seed (sub-seeds via ``SeedSequence(seed)``)."""
    s_rig, s_pose, s_obs = (int(v) for v in np.random.SeedSequence(int(seed)).generate_state(3))
    cams = generate_rig(n_cameras, s_rig)
    poses = generate_poses(n_frames, seed=s_pose)
    obs, outl = observe(poses, cams, noise_sigma, occlusion_rate, outlier_rate, s_obs)
    return SyntheticScene(cams, poses, obs, noise_sigma, occlusion_rate, outlier_rate, int(seed), outl)
