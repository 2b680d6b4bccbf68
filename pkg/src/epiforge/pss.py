"""Pose Structure Score.

A reference k-means model is fitted on root-centred, unit-norm ground-truth
poses. A prediction scores 1 when it falls in the same cluster as its
ground truth, 0 otherwise; mPSS is the mean over a set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from epiforge.camera import Pose3D
from epiforge.errors import DegenerateInput, EmptyInput, InsufficientData, LengthMismatch

DEFAULT_KS = (50, 100)
MAX_ITER = 300
DEFAULT_N_INIT = 10


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    seed: int
    inertia: float = 0.0

    def __post_init__(self):
        c = np.array(self.centroids, dtype=float)
        if c.ndim != 2 or c.shape[0] < 2:
            raise ValueError("a cluster model needs a (k >= 2, D) centroid matrix")
        if not np.isfinite(c).all():
            raise ValueError("centroids must be finite")
        d = _sq_dists(c, c)
        np.fill_diagonal(d, np.inf)
        if d.min() <= 1e-24:
            raise ValueError("centroids must be pairwise distinct")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, X: np.ndarray) -> np.ndarray:
        return nearest_centroid(X, self.centroids)


@dataclass(frozen=True)
class PssReport:
    mpss: float
    per_pose: np.ndarray = field(repr=False)
    k: int

    def to_dict(self) -> dict:
        return {"k": self.k, "mpss": self.mpss, "per_pose": [int(v) for v in self.per_pose]}


def normalize_pose(pose: Pose3D, root: int = 0) -> np.ndarray:
    """Root-centred, flattened, unit-norm pose vector of length 3J."""
    if isinstance(pose, Pose3D):
        if not pose.visibility.all():
            raise DegenerateInput("normalisation needs every joint visible")
        joints = pose.joints
    else:
        joints = np.asarray(pose, dtype=float)
    q = (joints - joints[root]).reshape(-1)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0:
        raise DegenerateInput("pose has zero norm after centring")
    return q / n


def _as_matrix(poses, root=0) -> np.ndarray:
    return np.stack([normalize_pose(p, root) for p in poses])


def _sq_dists(X, C):
    d = (X * X).sum(axis=1)[:, None] - 2.0 * X @ C.T + (C * C).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def nearest_centroid(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the closest centroid (squared Euclidean), lowest index on ties."""
    X = np.atleast_2d(X)
    return np.argmin(_sq_dists(X, np.asarray(centroids)), axis=1)


def _kmeans_pp(X, k, rng):
    """Greedy k-means++ seeding: each step draws ``2 + ln k`` D^2-weighted
    candidates and keeps the one giving the lowest potential."""
    n = X.shape[0]
    trials = 2 + int(np.log(k))
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            cand = rng.integers(n, size=trials)
        else:
            cand = rng.choice(n, size=trials, p=d2 / total)
        cand_d2 = np.minimum(d2[None, :], _sq_dists(X[cand], X))
        best = int(np.argmin(cand_d2.sum(axis=1)))
        centers[i] = X[cand[best]]
        d2 = cand_d2[best]
    return centers


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER):
    """Lloyd's algorithm with k-means++ seeding.

    Stops when assignments no longer change or after ``max_iter`` rounds.
    An emptied cluster is reseeded with the point farthest from its centroid.
    Returns ``(centroids, labels, inertia)``.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k < 1 or n < k:
        raise InsufficientData(f"k={k} clusters requested from {n} samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    C = _kmeans_pp(X, k, rng)
    labels = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, C), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            own = ((X - C[labels]) ** 2).sum(axis=1)
            far = int(np.argmax(own))
            labels[far] = j
            counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        C = sums / counts[:, None]
    labels = np.argmin(_sq_dists(X, C), axis=1)
    inertia = float(((X - C[labels]) ** 2).sum())
    return C, labels, inertia


def fit_clusters(gt_poses, k: int, seed: int = 0, root: int = 0, n_init: int = DEFAULT_N_INIT) -> ClusterModel:
    """Reference model: lowest-inertia k-means over ``n_init`` restarts.

    Restart seeds come from ``SeedSequence(seed)``.
    """
    poses = list(gt_poses)
    if k < 2 or len(poses) < k:
        raise InsufficientData(f"k={k} clusters requested from {len(poses)} poses")
    X = _as_matrix(poses, root)
    best = None
    for s in np.random.SeedSequence(seed).generate_state(n_init, dtype=np.uint64):
        C, _, inertia = kmeans(X, k, int(s))
        if best is None or inertia < best[1]:
            best = (C, inertia)
    return ClusterModel(best[0], seed=seed, inertia=best[1])


def pss(pred: Pose3D, gt: Pose3D, model: ClusterModel, root: int = 0) -> int:
    p = normalize_pose(pred, root)
    q = normalize_pose(gt, root)
    a = model.assign(np.stack([p, q]))
    return int(a[0] == a[1])


def mpss(preds, gts, model: ClusterModel, root: int = 0) -> PssReport:
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions for {len(gts)} ground-truth poses")
    if not preds:
        raise EmptyInput("no poses to score")
    a = model.assign(_as_matrix(preds, root))
    b = model.assign(_as_matrix(gts, root))
    per = (a == b).astype(int)
    return PssReport(mpss=float(per.mean()), per_pose=per, k=model.k)


def iou_matrix(labels_a: np.ndarray, labels_b: np.ndarray, k: int) -> np.ndarray:
    """IOU of member sets for every (cluster in run a, cluster in run b)."""
    inter = np.zeros((k, k))
    np.add.at(inter, (labels_a, labels_b), 1.0)
    size_a = np.bincount(labels_a, minlength=k)[:, None]
    size_b = np.bincount(labels_b, minlength=k)[None, :]
    union = size_a + size_b - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def matched_iou(labels_a, labels_b, k: int) -> float:
    """Mean IOU under the cluster correspondence maximising total IOU."""
    M = iou_matrix(labels_a, labels_b, k)
    rows, cols = linear_sum_assignment(M, maximize=True)
    return float(M[rows, cols].mean())


def matched_iou_bruteforce(labels_a, labels_b, k: int) -> float:
    M = iou_matrix(labels_a, labels_b, k)
    return max(float(np.mean(M[np.arange(k), list(perm)])) for perm in itertools.permutations(range(k)))


def stability_iou(gt_poses, k: int, n_runs: int, seed: int = 0, root: int = 0, seeds=None) -> float:
    """Grand mean of matched cluster IOUs over all pairs of independently seeded runs.

    Per-run seeds are drawn from ``SeedSequence(seed)`` unless ``seeds`` lists
    them explicitly.
    """
    poses = list(gt_poses)
    if n_runs < 2:
        raise InsufficientData("stability analysis needs at least 2 runs")
    if k < 2 or len(poses) < k:
        raise InsufficientData(f"k={k} clusters requested from {len(poses)} poses")
    X = _as_matrix(poses, root)
    if seeds is None:
        seeds = np.random.SeedSequence(seed).generate_state(n_runs, dtype=np.uint64)
    elif len(seeds) != n_runs:
        raise ValueError("len(seeds) must equal n_runs")
    runs = [kmeans(X, k, int(s))[1] for s in seeds]
    scores = [matched_iou(runs[a], runs[b], k) for a, b in itertools.combinations(range(n_runs), 2)]
    return float(np.mean(scores))
