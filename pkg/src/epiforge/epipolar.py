"""Two-view relative geometry from 2D joint correspondences.

Convention used throughout: homogeneous pixels ``x1 = [u, v, 1]`` in the
first view and ``x2`` in the second satisfy ``x1^T F x2 = 0``. The essential
matrix follows the same orientation, ``x1n^T E x2n = 0`` for normalised
coordinates, hence ``E = K1^T F K2``.

A :class:`RelativePose` ``(R, t)`` maps first-camera coordinates to
second-camera coordinates, ``X2 = R X1 + t``, with ``|t| = 1``. Under that
pose ``E`` is proportional to ``([t]_x R)^T``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from epiforge.camera import CameraIntrinsics
from epiforge.errors import AmbiguousCheirality, DegenerateConfiguration, InsufficientInliers

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 2.0
DEFAULT_MAX_ITER = 2000
DEFAULT_CONFIDENCE = 0.999

# numerical rank tolerances (relative to largest singular value)
_RANK_TOL = 1e-10


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def canonicalize(F: np.ndarray) -> np.ndarray:
    """Unit Frobenius norm, largest-magnitude entry positive."""
    F = np.asarray(F, dtype=float)
    F = F / np.linalg.norm(F)
    idx = np.unravel_index(np.argmax(np.abs(F)), F.shape)
    if F[idx] < 0:
        F = -F
    return F


@dataclass(frozen=True)
class FundamentalMatrix:
    F: np.ndarray

    def __post_init__(self):
        F = canonicalize(np.array(self.F, dtype=float).reshape(3, 3))
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    def residuals(self, x1, x2) -> np.ndarray:
        """Algebraic residuals ``x1^T F x2`` for (N, 2) pixel arrays."""
        h1, h2 = _homog(x1), _homog(x2)
        return np.einsum("ni,ij,nj->n", h1, self.F, h2)

    def sampson(self, x1, x2) -> np.ndarray:
        """Sampson distance in pixels (square root of the first-order error)."""
        return sampson_distance(self.F, x1, x2)


@dataclass(frozen=True)
class EssentialMatrix:
    E: np.ndarray


@dataclass(frozen=True)
class RelativePose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        t = t / np.linalg.norm(t)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def essential(self) -> np.ndarray:
        """Essential matrix in the ``x1^T E x2 = 0`` orientation."""
        return (skew(self.t) @ self.R).T


@dataclass(frozen=True)
class RansacReport:
    F: FundamentalMatrix
    inliers: np.ndarray
    iterations: int
    threshold: float

    @property
    def num_inliers(self) -> int:
        return int(self.inliers.sum())


def _homog(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    return np.hstack([x, np.ones((x.shape[0], 1))])


def hartley_normalization(x: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    x = np.asarray(x, dtype=float)
    c = x.mean(axis=0)
    d = np.linalg.norm(x - c, axis=1).mean()
    if d == 0:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _collinear(xh: np.ndarray) -> bool:
    sv = np.linalg.svd(xh, compute_uv=False)
    return sv[2] <= _RANK_TOL * sv[0]


def sampson_distance(F, x1, x2) -> np.ndarray:
    h1, h2 = _homog(x1), _homog(x2)
    Fx2 = h2 @ F.T  # rows: F x2
    Ftx1 = h1 @ F  # rows: F^T x1
    num = np.einsum("ni,ni->n", h1, Fx2) ** 2
    den = Fx2[:, 0] ** 2 + Fx2[:, 1] ** 2 + Ftx1[:, 0] ** 2 + Ftx1[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    return np.sqrt(d2)


def eight_point(x1, x2) -> FundamentalMatrix:
    """Normalised 8-point estimate of F from (N, 2) pixel arrays, N >= 8."""
    x1 = np.asarray(x1, dtype=float).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 2)
    if x1.shape != x2.shape:
        raise ValueError("correspondence arrays differ in shape")
    if x1.shape[0] < 8:
        raise DegenerateConfiguration(f"need at least 8 correspondences, got {x1.shape[0]}")

    T1, T2 = hartley_normalization(x1), hartley_normalization(x2)
    n1 = _homog(x1) @ T1.T
    n2 = _homog(x2) @ T2.T
    if _collinear(n1) or _collinear(n2):
        raise DegenerateConfiguration("points are collinear in one view")

    # row n: kron(x1, x2) so that A @ vec(F) = x1^T F x2 with row-major vec
    A = np.einsum("ni,nj->nij", n1, n2).reshape(-1, 9)
    _, sv, Vt = np.linalg.svd(A)
    if sv.shape[0] < 9:
        sv = np.concatenate([sv, np.zeros(9 - sv.shape[0])])
    rank = int((sv > _RANK_TOL * sv[0]).sum())
    # pure rotation leaves a 3-dim family of valid F (rank 6); less than that
    # means the correspondences carry no epipolar information
    if rank < 6:
        raise DegenerateConfiguration(f"design matrix rank {rank} < 6")

    Fn = Vt[-1].reshape(3, 3)
    U, S, Vt3 = np.linalg.svd(Fn)
    S[2] = 0.0
    Fn = U @ np.diag(S) @ Vt3
    return FundamentalMatrix(T1.T @ Fn @ T2)


def _adaptive_iterations(inlier_ratio: float, confidence: float, sample_size: int = 8) -> float:
    if inlier_ratio <= 0:
        return math.inf
    p_good = inlier_ratio**sample_size
    if p_good >= 1.0:
        return 0
    denom = math.log1p(-p_good)
    if denom == 0.0:
        return math.inf
    return math.log1p(-confidence) / denom


def _msac_cost(d: np.ndarray, threshold: float) -> float:
    return float(np.minimum(d, threshold) ** 2 @ np.ones_like(d))


def ransac_fundamental(
    x1,
    x2,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    confidence: float = DEFAULT_CONFIDENCE,
) -> RansacReport:
    """Robust F estimate from minimal samples of 8, scored by Sampson distance.

    Hypotheses are ranked by truncated squared Sampson cost (inliers count
    their residual, outliers count ``threshold**2``). The winner is refit on
    its inlier set with :func:`eight_point`; the refit replaces the sample
    model only when its truncated cost is no worse, which keeps a single
    near-threshold false inlier from dragging an otherwise exact model.

    Randomness comes from ``numpy.random.Generator(PCG64(seed))`` only, so the
    report is reproducible for a given seed.
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 2)
    n = x1.shape[0]
    if n < 8:
        raise InsufficientInliers(f"need at least 8 correspondences, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))

    best_F = None
    best_cost = math.inf
    needed = float(max_iter)
    it = 0
    while it < max_iter and it < needed:
        it += 1
        sample = rng.choice(n, size=8, replace=False)
        try:
            F = eight_point(x1[sample], x2[sample])
        except DegenerateConfiguration:
            continue
        d = F.sampson(x1, x2)
        cost = _msac_cost(d, threshold)
        if cost < best_cost:
            best_F, best_cost = F, cost
            needed = _adaptive_iterations(float(np.mean(d <= threshold)), confidence)

    if best_F is None or (best_F.sampson(x1, x2) <= threshold).sum() < 8:
        raise InsufficientInliers("no hypothesis reached 8 inliers")

    F_best = best_F
    mask = F_best.sampson(x1, x2) <= threshold
    for _ in range(10):
        try:
            F_ref = eight_point(x1[mask], x2[mask])
        except DegenerateConfiguration:
            break
        d = F_ref.sampson(x1, x2)
        cost = _msac_cost(d, threshold)
        new_mask = d <= threshold
        if cost > best_cost or new_mask.sum() < 8:
            break
        F_best, best_cost = F_ref, cost
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    mask = F_best.sampson(x1, x2) <= threshold
    return RansacReport(F=F_best, inliers=mask, iterations=it, threshold=float(threshold))


def essential_from_fundamental(F: FundamentalMatrix, K1: CameraIntrinsics, K2: CameraIntrinsics) -> EssentialMatrix:
    """``K1^T F K2`` projected onto the essential manifold (sigma, sigma, 0)."""
    Fm = F.F if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=float)
    E = K1.K.T @ Fm @ K2.K
    U, S, Vt = np.linalg.svd(E)
    s = 0.5 * (S[0] + S[1])
    E = U @ np.diag([s, s, 0.0]) @ Vt
    return EssentialMatrix(E / np.linalg.norm(E))


_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def decompose_essential(E: EssentialMatrix) -> list[RelativePose]:
    """The four (R, t) candidates, ordered (Ra, t), (Ra, -t), (Rb, t), (Rb, -t)."""
    Em = E.E if isinstance(E, EssentialMatrix) else np.asarray(E, dtype=float)
    # standard decomposition applies to the x2^T E' x1 = 0 orientation
    U, _, Vt = np.linalg.svd(Em.T)
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    Ra = U @ _W @ Vt
    Rb = U @ _W.T @ Vt
    t = U[:, 2]
    return [RelativePose(Ra, t), RelativePose(Ra, -t), RelativePose(Rb, t), RelativePose(Rb, -t)]


def _triangulate_normalized(n1: np.ndarray, n2: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear triangulation of normalised homogeneous points, camera 1 at origin."""
    P1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    P2 = np.hstack([R, t[:, None]])
    out = np.empty((n1.shape[0], 3))
    for i in range(n1.shape[0]):
        a, b = n1[i], n2[i]
        A = np.stack([a[0] * P1[2] - P1[0], a[1] * P1[2] - P1[1], b[0] * P2[2] - P2[0], b[1] * P2[2] - P2[1]])
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        X = np.linalg.svd(A)[2][-1]
        out[i] = X[:3] / X[3] if X[3] != 0 else np.full(3, np.nan)
    return out


def cheirality_counts(hypotheses, x1, x2, K1: CameraIntrinsics, K2: CameraIntrinsics) -> np.ndarray:
    n1 = _homog(x1) @ K1.K_inv.T
    n2 = _homog(x2) @ K2.K_inv.T
    counts = []
    for h in hypotheses:
        X = _triangulate_normalized(n1, n2, h.R, h.t)
        z1 = X[:, 2]
        z2 = (X @ h.R.T + h.t)[:, 2]
        counts.append(int(np.sum((z1 > 0) & (z2 > 0))))
    return np.array(counts)


def select_by_cheirality(hypotheses, x1, x2, K1: CameraIntrinsics, K2: CameraIntrinsics) -> RelativePose:
    """Pick the hypothesis placing the most correspondences in front of both cameras.

    Raises AmbiguousCheirality when the top two counts are equal rather than
    silently choosing one.
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 2)
    if x1.shape[0] < 1:
        raise ValueError("need at least one correspondence")
    counts = cheirality_counts(hypotheses, x1, x2, K1, K2)
    order = np.argsort(-counts, kind="stable")
    if len(counts) > 1 and counts[order[0]] == counts[order[1]]:
        raise AmbiguousCheirality(f"cheirality counts tie: {counts.tolist()}")
    best = int(order[0])
    if counts[best] < x1.shape[0]:
        log.warning("cheirality: best hypothesis has %d/%d points in front", counts[best], x1.shape[0])
    return hypotheses[best]


@dataclass(frozen=True)
class PairCalibration:
    ransac: RansacReport
    E: EssentialMatrix
    pose: RelativePose
    cheirality: np.ndarray


def calibrate_pair(x1, x2, K1, K2, threshold=DEFAULT_THRESHOLD, max_iter=DEFAULT_MAX_ITER, seed=0) -> PairCalibration:
    """RANSAC F, essential matrix, decomposition and cheirality selection."""
    x1 = np.asarray(x1, dtype=float).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=float).reshape(-1, 2)
    rep = ransac_fundamental(x1, x2, threshold=threshold, max_iter=max_iter, seed=seed)
    E = essential_from_fundamental(rep.F, K1, K2)
    hyps = decompose_essential(E)
    m = rep.inliers
    counts = cheirality_counts(hyps, x1[m], x2[m], K1, K2)
    pose = select_by_cheirality(hyps, x1[m], x2[m], K1, K2)
    return PairCalibration(rep, E, pose, counts)


def rotation_angle(Ra, Rb) -> float:
    """Geodesic angle (radians) between two rotations."""
    c = (np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0
    # arccos loses precision near 0; use the antisymmetric part as well
    M = np.asarray(Ra).T @ np.asarray(Rb)
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(math.atan2(s, c))
