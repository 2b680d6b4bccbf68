"""Per-pose localisation metrics: MPJPE, NMPJPE, PMPJPE, PCK and NPCK.

MPJPE, NMPJPE, PCK and NPCK root-centre both poses on ``root`` (pelvis,
index 0 by default) first; pass ``root=None`` to skip. PMPJPE optimises
translation itself and ignores ``root``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from epiforge.camera import Pose3D
from epiforge.errors import DegenerateInput, EmptyOverlap

DEFAULT_PCK_THRESHOLD = 150.0


@dataclass(frozen=True)
class MetricReport:
    mpjpe: float
    nmpjpe: float
    pmpjpe: float
    pck: float
    npck: float
    n_poses: int

    def to_dict(self) -> dict:
        return asdict(self)


def _overlap(pred: Pose3D, gt: Pose3D, root):
    if pred.num_joints != gt.num_joints:
        raise ValueError(f"joint count mismatch: {pred.num_joints} vs {gt.num_joints}")
    m = pred.visibility & gt.visibility
    if not m.any():
        raise EmptyOverlap("no mutually visible joints")
    p = pred.joints.copy()
    g = gt.joints.copy()
    if root is not None:
        if not m[root]:
            raise EmptyOverlap(f"root joint {root} is not visible in both poses")
        p = p - p[root]
        g = g - g[root]
    return p[m], g[m]


def optimal_scale(p: np.ndarray, g: np.ndarray) -> float:
    denom = float(np.sum(p * p))
    if denom == 0:
        raise DegenerateInput("prediction has zero norm")
    return float(np.sum(p * g)) / denom


def mpjpe(pred: Pose3D, gt: Pose3D, root: int | None = 0) -> float:
    p, g = _overlap(pred, gt, root)
    return float(np.linalg.norm(p - g, axis=1).mean())


def nmpjpe(pred: Pose3D, gt: Pose3D, root: int | None = 0) -> float:
    p, g = _overlap(pred, gt, root)
    s = optimal_scale(p, g)
    return float(np.linalg.norm(s * p - g, axis=1).mean())


def similarity_align(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Align point set ``p`` onto ``g`` with the least-squares similarity, no reflections."""
    mu_p, mu_g = p.mean(axis=0), g.mean(axis=0)
    pc, gc = p - mu_p, g - mu_g
    if p.shape[0] < 3 or np.linalg.matrix_rank(pc, tol=1e-9 * max(1.0, np.abs(pc).max())) < 2:
        raise DegenerateInput("need at least 3 non-collinear joints for Procrustes alignment")
    U, S, Vt = np.linalg.svd(gc.T @ pc)
    D = np.eye(3)
    if np.linalg.det(U @ Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    var_p = float(np.sum(pc**2))
    s = float(np.sum(S * np.diag(D))) / var_p
    return s * pc @ R.T + mu_g


def pmpjpe(pred: Pose3D, gt: Pose3D) -> float:
    p, g = _overlap(pred, gt, None)
    return float(np.linalg.norm(similarity_align(p, g) - g, axis=1).mean())


def pck(pred: Pose3D, gt: Pose3D, threshold: float = DEFAULT_PCK_THRESHOLD, root: int | None = 0) -> float:
    """Fraction of mutually visible joints with error strictly below ``threshold``."""
    p, g = _overlap(pred, gt, root)
    return float(np.mean(np.linalg.norm(p - g, axis=1) < threshold))


def npck(pred: Pose3D, gt: Pose3D, threshold: float = DEFAULT_PCK_THRESHOLD, root: int | None = 0) -> float:
    p, g = _overlap(pred, gt, root)
    s = optimal_scale(p, g)
    return float(np.mean(np.linalg.norm(s * p - g, axis=1) < threshold))


def evaluate(preds, gts, threshold: float = DEFAULT_PCK_THRESHOLD, root: int | None = 0) -> MetricReport:
    """Mean of per-pose metrics over a dataset."""
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth poses")
    if not preds:
        raise ValueError("no poses to evaluate")
    rows = np.array(
        [
            (
                mpjpe(p, g, root),
                nmpjpe(p, g, root),
                pmpjpe(p, g),
                pck(p, g, threshold, root),
                npck(p, g, threshold, root),
            )
            for p, g in zip(preds, gts)
        ]
    )
    m = rows.mean(axis=0)
    return MetricReport(*(float(v) for v in m), n_poses=len(preds))
