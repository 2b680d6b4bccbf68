"""Two-view triangulation, multi-view fusion and the smooth-L1 target loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from epiforge.camera import Pose2D, Pose3D
from epiforge.epipolar import FundamentalMatrix, skew
from epiforge.errors import EmptyOverlap, NoVisibleJoints, ParallelRays

log = logging.getLogger(__name__)

_PARALLEL_TOL = 1e-10
_IMAG_TOL = 1e-8


@dataclass(frozen=True)
class TriangulatedPose:
    pose: Pose3D
    per_joint_views: np.ndarray
    reprojection_rmse: float


def fundamental_from_projections(P1, P2) -> FundamentalMatrix:
    """F with ``x1^T F x2 = 0`` for the camera pair (P1, P2)."""
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    # centre of camera 2 is the null vector of P2
    C2 = np.linalg.svd(P2)[2][-1]
    e1 = P1 @ C2
    # F21 maps x2 to its epipolar line in image 1
    F21 = skew(e1) @ P1 @ np.linalg.pinv(P2)
    return FundamentalMatrix(F21)


def triangulate_dlt(u1, u2, P1, P2) -> np.ndarray:
    u1 = np.asarray(u1, dtype=float).reshape(2)
    u2 = np.asarray(u2, dtype=float).reshape(2)
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    A = np.stack(
        [
            u1[0] * P1[2] - P1[0],
            u1[1] * P1[2] - P1[1],
            u2[0] * P2[2] - P2[0],
            u2[1] * P2[2] - P2[1],
        ]
    )
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ParallelRays("empty triangulation constraint")
    A = A / norms
    _, sv, Vt = np.linalg.svd(A)
    # a second (near-)null direction means the rays do not pin down a point
    if sv[2] <= _PARALLEL_TOL * sv[0]:
        raise ParallelRays(f"singular values {sv} indicate parallel rays")
    X = Vt[-1]
    if abs(X[3]) <= _PARALLEL_TOL * np.linalg.norm(X[:3]):
        raise ParallelRays("intersection at infinity")
    X = X[:3] / X[3]
    if not np.isfinite(X).all():
        raise ParallelRays("non-finite intersection")
    return X


def _reprojection_sq(X, u, P) -> float:
    h = P @ np.append(X, 1.0)
    return float(np.sum((h[:2] / h[2] - u) ** 2))


def dlt_reprojection_error(u1, u2, P1, P2) -> float:
    """Sum of squared reprojection residuals of the DLT point in both images."""
    X = triangulate_dlt(u1, u2, P1, P2)
    return _reprojection_sq(X, np.asarray(u1, float), np.asarray(P1, float)) + _reprojection_sq(
        X, np.asarray(u2, float), np.asarray(P2, float)
    )


def _epipoles(F):
    # F e = 0 and F^T e' = 0
    _, _, Vt = np.linalg.svd(F)
    e = Vt[-1]
    U, _, _ = np.linalg.svd(F)
    ep = U[:, -1]
    return e, ep


def optimal_correction(u1, u2, F) -> tuple[np.ndarray, np.ndarray]:
    """Epipolar-consistent pair closest to (u1, u2) in summed squared image distance.

    ``F`` follows ``x1^T F x2 = 0``. Minimises over the pencil of epipolar
    lines by finding all real roots of a degree-6 polynomial and also
    checking the limit ``t -> inf``.
    """
    Fm = F.F if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=float)
    u1 = np.asarray(u1, dtype=float).reshape(2)
    u2 = np.asarray(u2, dtype=float).reshape(2)
    # below, view "a" is image 2 and view "b" image 1, so that xb^T G xa = 0
    # with G = F, matching the usual x'^T F x = 0 layout
    xa, xb = u2, u1
    Ta = np.array([[1.0, 0.0, -xa[0]], [0.0, 1.0, -xa[1]], [0.0, 0.0, 1.0]])
    Tb = np.array([[1.0, 0.0, -xb[0]], [0.0, 1.0, -xb[1]], [0.0, 0.0, 1.0]])
    Ta_inv = np.array([[1.0, 0.0, xa[0]], [0.0, 1.0, xa[1]], [0.0, 0.0, 1.0]])
    Tb_inv = np.array([[1.0, 0.0, xb[0]], [0.0, 1.0, xb[1]], [0.0, 0.0, 1.0]])
    G = Tb_inv.T @ Fm @ Ta_inv
    G = G / np.linalg.norm(G)

    e, ep = _epipoles(G)
    na = np.hypot(e[0], e[1])
    nb = np.hypot(ep[0], ep[1])
    if na == 0 or nb == 0:
        raise FloatingPointError("epipole coincides with the measured point")
    e = e / na
    ep = ep / nb
    Ra = np.array([[e[0], e[1], 0.0], [-e[1], e[0], 0.0], [0.0, 0.0, 1.0]])
    Rb = np.array([[ep[0], ep[1], 0.0], [-ep[1], ep[0], 0.0], [0.0, 0.0, 1.0]])
    G = Rb @ G @ Ra.T

    f, fp = e[2], ep[2]
    a, b, c, d = G[1, 1], G[1, 2], G[2, 1], G[2, 2]

    P = np.polynomial.polynomial
    at_b = np.array([b, a])
    ct_d = np.array([d, c])
    q = P.polyadd(P.polymul(at_b, at_b), fp**2 * P.polymul(ct_d, ct_d))
    one_f = np.array([1.0, 0.0, f**2])
    g = P.polysub(
        P.polymul(np.array([0.0, 1.0]), P.polymul(q, q)),
        (a * d - b * c) * P.polymul(P.polymul(one_f, one_f), P.polymul(at_b, ct_d)),
    )
    g = np.trim_zeros(g, "b")
    roots = np.roots(g[::-1]) if g.size > 1 else np.array([])
    real = roots[np.abs(roots.imag) < _IMAG_TOL * (1.0 + np.abs(roots.real))].real

    def cost(t):
        return t**2 / (1.0 + f**2 * t**2) + (c * t + d) ** 2 / ((a * t + b) ** 2 + fp**2 * (c * t + d) ** 2)

    cands = [(cost(t), t) for t in real if np.isfinite(cost(t))]
    cost_inf = (1.0 / f**2 if f != 0 else np.inf) + c**2 / (a**2 + fp**2 * c**2)
    if not cands and not np.isfinite(cost_inf):
        raise FloatingPointError("no real root of the correction polynomial")
    best_cost, best_t = min(cands, default=(np.inf, 0.0))

    if cost_inf < best_cost:
        la = np.array([f, 0.0, -1.0])
        lb = np.array([-fp * c, a, c])
    else:
        t = best_t
        la = np.array([t * f, 1.0, -t])
        lb = np.array([-fp * (c * t + d), a * t + b, c * t + d])

    def foot(line):
        lam, mu, nu = line
        return np.array([-lam * nu, -mu * nu, lam**2 + mu**2])

    ha = Ta_inv @ Ra.T @ foot(la)
    hb = Tb_inv @ Rb.T @ foot(lb)
    ca = ha[:2] / ha[2]
    cb = hb[:2] / hb[2]
    if not (np.isfinite(ca).all() and np.isfinite(cb).all()):
        raise FloatingPointError("corrected point at infinity")
    return cb, ca


def triangulate_polynomial(u1, u2, F, P1, P2, return_corrected: bool = False):
    """Optimal two-view triangulation; falls back to DLT if root finding fails."""
    try:
        c1, c2 = optimal_correction(u1, u2, F)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("polynomial triangulation failed (%s); using DLT", exc)
        X = triangulate_dlt(u1, u2, P1, P2)
        if return_corrected:
            return X, np.asarray(u1, float), np.asarray(u2, float)
        return X
    X = triangulate_dlt(c1, c2, P1, P2)
    if return_corrected:
        return X, c1, c2
    return X


def vector_median(candidates, geometric: bool = False) -> np.ndarray:
    """Medoid of the candidates: the member minimising summed distance to the rest.

    Ties go to the lowest index. With ``geometric=True`` the Weiszfeld
    geometric median is returned instead, which need not be a member.
    """
    X = np.asarray(candidates, dtype=float).reshape(-1, 3)
    if X.shape[0] == 0:
        raise ValueError("vector_median needs at least one candidate")
    if geometric:
        return _geometric_median(X)
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1).sum(axis=1)
    return X[int(np.argmin(D))].copy()


def _geometric_median(X, iters=200, tol=1e-12):
    y = X.mean(axis=0)
    for _ in range(iters):
        d = np.linalg.norm(X - y, axis=1)
        if np.any(d < tol):
            return X[int(np.argmin(d))].copy()
        w = 1.0 / d
        y_new = (X * w[:, None]).sum(axis=0) / w.sum()
        if np.linalg.norm(y_new - y) < tol:
            return y_new
        y = y_new
    return y


def triangulate_pose(views, F_pairs=None, geometric_median: bool = False) -> TriangulatedPose:
    """Triangulate a pose from consecutive view pairs.

    ``views`` is a sequence of ``(Pose2D, P)`` with ``P`` a 3x4 projection
    matrix. Only adjacent pairs (i, i+1) are used. ``F_pairs[i]`` is the
    fundamental matrix of pair (i, i+1); computed from the projections if
    omitted.
    """
    if len(views) < 2:
        raise ValueError("need at least two views")
    poses = [v[0] for v in views]
    Ps = [np.asarray(v[1], dtype=float) for v in views]
    J = poses[0].num_joints
    if any(p.num_joints != J for p in poses):
        raise ValueError("views disagree on joint count")
    if F_pairs is None:
        F_pairs = [fundamental_from_projections(Ps[i], Ps[i + 1]) for i in range(len(views) - 1)]

    joints = np.full((J, 3), np.nan)
    visible = np.zeros(J, dtype=bool)
    nviews = np.zeros(J, dtype=int)
    for j in range(J):
        cands = []
        used = set()
        for i in range(len(views) - 1):
            a, b = poses[i], poses[i + 1]
            if not (a.visibility[j] and b.visibility[j]):
                continue
            try:
                X = triangulate_polynomial(a.joints[j], b.joints[j], F_pairs[i], Ps[i], Ps[i + 1])
            except ParallelRays:
                continue
            cands.append(X)
            used.update((i, i + 1))
        if not cands:
            continue
        joints[j] = cands[0] if len(cands) == 1 else vector_median(cands, geometric=geometric_median)
        visible[j] = True
        nviews[j] = len(used)

    if not visible.any():
        raise NoVisibleJoints("no joint is visible in any consecutive view pair")

    sq = []
    for pose2d, P in zip(poses, Ps):
        for j in np.flatnonzero(visible & pose2d.visibility):
            sq.append(_reprojection_sq(joints[j], pose2d.joints[j], P))
    rmse = float(np.sqrt(np.mean(sq))) if sq else 0.0
    return TriangulatedPose(Pose3D(joints, visible), nviews, rmse)


def smooth_l1(x) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=float))
    return np.where(ax < 1.0, 0.5 * ax**2, ax - 0.5)


def smooth_l1_loss(pred: Pose3D, target: Pose3D) -> float:
    """Mean elementwise smooth-L1 over coordinates of mutually visible joints."""
    if pred.num_joints != target.num_joints:
        raise ValueError("joint count mismatch")
    m = pred.visibility & target.visibility
    if not m.any():
        raise EmptyOverlap("no mutually visible joints")
    return float(smooth_l1(pred.joints[m] - target.joints[m]).mean())
