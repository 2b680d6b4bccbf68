"""Volumetric heatmaps and soft-argmax decoding.

Volumes are indexed ``scores[j, x, y, z]``; voxel centres sit at integer
coordinates starting from 0. Mapping voxel coordinates to image pixels or
millimetres is left to the caller.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from epiforge.camera import Pose2D, Pose3D


@dataclass(frozen=True)
class HeatmapVolume:
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim == 3:
            s = s[None]
        if s.ndim != 4 or min(s.shape[1:]) < 1:
            raise ValueError(f"scores must have shape (J, w, h, d), got {s.shape}")
        if not np.isfinite(s).all():
            raise ValueError("heatmap scores must be finite")
        object.__setattr__(self, "scores", s)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.scores.shape[1:])

    @property
    def num_joints(self) -> int:
        return self.scores.shape[0]


def _softmax(vol: HeatmapVolume, temperature: float) -> np.ndarray:
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    J = vol.num_joints
    logits = vol.scores.reshape(J, -1) / temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape(vol.scores.shape)


def _expect_xy(pxy: np.ndarray) -> np.ndarray:
    w, h = pxy.shape[1:]
    ex = pxy.sum(axis=2) @ np.arange(w, dtype=float)
    ey = pxy.sum(axis=1) @ np.arange(h, dtype=float)
    return np.stack([ex, ey], axis=1)


def soft_argmax_3d(vol: HeatmapVolume, temperature: float = 1.0) -> Pose3D:
    p = _softmax(vol, temperature)
    d = vol.dims[2]
    # (x, y) via the depth marginal so the 2D decoder agrees bit for bit
    xy = _expect_xy(p.sum(axis=3))
    ez = p.sum(axis=(1, 2)) @ np.arange(d, dtype=float)
    return Pose3D(np.column_stack([xy, ez]))


def soft_argmax_2d(vol: HeatmapVolume, temperature: float = 1.0) -> Pose2D:
    p = _softmax(vol, temperature)
    return Pose2D(_expect_xy(p.sum(axis=3)))


def write_volume(path, vol: HeatmapVolume) -> None:
    """JSON header line followed by little-endian float32 scores in (J, w, h, d) order."""
    J = vol.num_joints
    w, h, d = vol.dims
    header = json.dumps({"J": J, "w": w, "h": h, "d": d}) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vol.scores.astype("<f4").tobytes(order="C"))


def read_volume(path) -> HeatmapVolume:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("ascii"))
    shape = (int(header["J"]), int(header["w"]), int(header["h"]), int(header["d"]))
    data = np.frombuffer(raw[nl + 1 :], dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise ValueError(f"volume payload has {data.size} floats, header implies {int(np.prod(shape))}")
    return HeatmapVolume(data.reshape(shape).astype(float))
