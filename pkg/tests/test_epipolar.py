import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from epiforge.camera import CameraExtrinsics, CameraIntrinsics, projection_matrix
from epiforge.epipolar import (
    FundamentalMatrix,
    RelativePose,
    canonicalize,
    cheirality_counts,
    decompose_essential,
    eight_point,
    essential_from_fundamental,
    ransac_fundamental,
    rotation_angle,
    sampson_distance,
    select_by_cheirality,
    skew,
)
from epiforge.errors import AmbiguousCheirality, DegenerateConfiguration, InsufficientInliers
from epiforge.synth import DEFAULT_INTRINSICS, generate_poses, generate_rig, look_at

K = DEFAULT_INTRINSICS


def relative_gt(e1: CameraExtrinsics, e2: CameraExtrinsics):
    R = e2.R @ e1.R.T
    t = e2.t - R @ e1.t
    return R, t / np.linalg.norm(t)


def project_all(X, intr, extr):
    P = projection_matrix(intr, extr)
    h = np.hstack([X, np.ones((len(X), 1))]) @ P.T
    return h[:, :2] / h[:, 2:]


@pytest.fixture(scope="module")
def rig_pair():
    (k1, e1), (k2, e2) = generate_rig(2, seed=5)
    X = np.concatenate([p.joints for p in generate_poses(6, seed=8)])
    return e1, e2, X, project_all(X, k1, e1), project_all(X, k2, e2)


def test_eight_exact_correspondences(rig_pair):
    _, _, _, x1, x2 = rig_pair
    idx = [0, 3, 7, 10, 13, 16, 20, 30]
    F = eight_point(x1[idx], x2[idx])
    assert np.abs(F.residuals(x1[idx], x2[idx])).max() < 1e-9
    assert np.linalg.svd(F.F, compute_uv=False)[2] < 1e-9
    assert abs(np.linalg.norm(F.F) - 1.0) < 1e-12


def test_collinear_is_degenerate():
    t = np.linspace(0, 1, 10)
    x1 = np.column_stack([100 + 50 * t, 200 + 30 * t])
    x2 = np.column_stack([300 - 20 * t, 100 + 70 * t])
    with pytest.raises(DegenerateConfiguration):
        eight_point(x1, x2)


def test_too_few_points():
    with pytest.raises(DegenerateConfiguration):
        eight_point(np.zeros((7, 2)), np.zeros((7, 2)))


def test_pure_rotation_still_satisfies_constraint(rng):
    e1 = look_at([4000.0, 0.0, 300.0])
    R = Rotation.from_rotvec([0.0, 0.0, 0.2]).as_matrix() @ e1.R
    e2 = CameraExtrinsics(R, e1.T)
    X = rng.normal(scale=400.0, size=(30, 3))
    x1, x2 = project_all(X, K, e1), project_all(X, K, e2)
    F = eight_point(x1, x2)
    assert np.abs(F.residuals(x1, x2)).max() < 1e-9


def test_matches_projection_ground_truth(rig_pair):
    e1, e2, _, x1, x2 = rig_pair
    R, t = relative_gt(e1, e2)
    F_gt = K.K_inv.T @ (skew(t) @ R).T @ K.K_inv
    F = eight_point(x1, x2)
    np.testing.assert_allclose(F.F, canonicalize(F_gt), atol=1e-8)


@given(st.floats(0.01, 100.0))
def test_scale_covariance(s):
    (k1, e1), (k2, e2) = generate_rig(2, seed=2)
    X = np.concatenate([p.joints for p in generate_poses(2, seed=4)])
    x1, x2 = project_all(X, k1, e1), project_all(X, k2, e2)
    F = eight_point(x1, x2).F
    Fs = eight_point(s * x1, s * x2).F
    S = np.diag([s, s, 1.0])
    # pixel rescaling x -> S x maps F to S^-1 F S^-1
    assert np.linalg.norm(canonicalize(S @ Fs @ S) - F) < 1e-6


def test_sampson_matches_geometric_distance_for_exact_points(rig_pair):
    _, _, _, x1, x2 = rig_pair
    F = eight_point(x1, x2)
    assert sampson_distance(F.F, x1, x2).max() < 1e-6
    shifted = x2 + np.array([0.0, 3.0])
    assert sampson_distance(F.F, x1, shifted).max() > 0.1


def test_ransac_no_outliers(rig_pair):
    _, _, _, x1, x2 = rig_pair
    rep = ransac_fundamental(x1[:100], x2[:100], threshold=1.0, seed=3)
    assert rep.num_inliers == 100


def test_ransac_with_labelled_outliers(rig_pair, rng):
    _, _, _, x1, x2 = rig_pair
    x1, x2 = x1[:100].copy(), x2[:100].copy()
    out = np.zeros(100, dtype=bool)
    out[rng.choice(100, 30, replace=False)] = True
    x2[out] = rng.uniform(0, 1024, size=(30, 2))
    rep = ransac_fundamental(x1, x2, threshold=1.0, seed=9)
    assert (rep.inliers & ~out).sum() >= 68
    assert (rep.inliers & out).sum() <= 2
    assert (rep.F.sampson(x1, x2)[rep.inliers] <= 1.0).all()


def test_ransac_is_deterministic(rig_pair, rng):
    _, _, _, x1, x2 = rig_pair
    x2 = x2 + rng.normal(size=x2.shape)
    a = ransac_fundamental(x1, x2, seed=42)
    b = ransac_fundamental(x1, x2, seed=42)
    assert np.array_equal(a.F.F, b.F.F)
    assert np.array_equal(a.inliers, b.inliers)
    assert a.iterations == b.iterations


def test_ransac_insufficient():
    rng = np.random.default_rng(0)
    with pytest.raises(InsufficientInliers):
        ransac_fundamental(rng.uniform(0, 1000, (5, 2)), rng.uniform(0, 1000, (5, 2)))
    with pytest.raises(InsufficientInliers):
        ransac_fundamental(rng.uniform(0, 1000, (40, 2)), rng.uniform(0, 1000, (40, 2)), threshold=1e-6, max_iter=50)


def test_essential_matches_ground_truth(rig_pair):
    e1, e2, _, x1, x2 = rig_pair
    R, t = relative_gt(e1, e2)
    E_gt = (skew(t) @ R).T
    E = essential_from_fundamental(eight_point(x1, x2), K, K).E
    corr = abs(np.sum(E * E_gt)) / (np.linalg.norm(E) * np.linalg.norm(E_gt))
    assert corr > 1 - 1e-6
    sv = np.linalg.svd(E, compute_uv=False)
    assert abs(sv[0] - sv[1]) < 1e-12 and sv[2] < 1e-12


def test_essential_identity_intrinsics(rng):
    F = FundamentalMatrix(rng.normal(size=(3, 3)))
    I = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
    E = essential_from_fundamental(F, I, I).E
    U, S, Vt = np.linalg.svd(F.F)
    proj = U @ np.diag([(S[0] + S[1]) / 2, (S[0] + S[1]) / 2, 0.0]) @ Vt
    np.testing.assert_allclose(E, proj / np.linalg.norm(proj), atol=1e-12)


@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3), st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_decomposition_contains_ground_truth(rv, tv):
    t = np.array(tv)
    if np.linalg.norm(t) < 1e-3:
        t = np.array([1.0, 0.0, 0.0])
    R = Rotation.from_rotvec(rv).as_matrix()
    t = t / np.linalg.norm(t)
    hyps = decompose_essential(RelativePose(R, t).essential())
    assert len(hyps) == 4
    for h in hyps:
        assert abs(np.linalg.det(h.R) - 1.0) < 1e-9
        np.testing.assert_allclose(h.R.T @ h.R, np.eye(3), atol=1e-9)
    right_r = [h for h in hyps if rotation_angle(h.R, R) < 1e-6]
    assert len(right_r) == 2
    assert sum(float(h.t @ t) > 1 - 1e-9 for h in right_r) == 1


def test_hypotheses_pair_up():
    hyps = decompose_essential(RelativePose(Rotation.from_rotvec([0.1, 0.5, -0.2]).as_matrix(), [1, 2, 3]).essential())
    for a, b in ((0, 1), (2, 3)):
        np.testing.assert_array_equal(hyps[a].R, hyps[b].R)
        np.testing.assert_allclose(hyps[a].t, -hyps[b].t)


def test_cheirality_selects_truth(rig_pair):
    e1, e2, X, x1, x2 = rig_pair
    R, t = relative_gt(e1, e2)
    x1, x2 = x1[:17], x2[:17]
    hyps = decompose_essential(RelativePose(R, t).essential())
    counts = cheirality_counts(hyps, x1, x2, K, K)
    best = select_by_cheirality(hyps, x1, x2, K, K)
    assert counts.max() == 17
    assert sorted(counts)[-2] < 17 / 2
    assert rotation_angle(best.R, R) < 1e-9 and best.t @ t > 1 - 1e-9


def test_cheirality_single_point(rig_pair):
    e1, e2, _, x1, x2 = rig_pair
    R, t = relative_gt(e1, e2)
    hyps = decompose_essential(RelativePose(R, t).essential())
    assert cheirality_counts(hyps, x1[:1], x2[:1], K, K).max() == 1
    best = select_by_cheirality(hyps, x1[:1], x2[:1], K, K)
    assert rotation_angle(best.R, R) < 1e-9


def test_cheirality_points_behind_never_silently_full(rng):
    e1 = CameraExtrinsics.identity()
    R = Rotation.from_rotvec([0.0, 0.3, 0.0]).as_matrix()
    e2 = CameraExtrinsics.from_rt(R, [-1000.0, 0.0, 100.0])
    front = rng.normal(scale=300.0, size=(10, 3)) + [0, 0, 4000]
    behind = rng.normal(scale=300.0, size=(10, 3)) + [0, 0, -4000]
    X = np.vstack([front, behind])
    Rt, tt = relative_gt(e1, e2)
    hyps = decompose_essential(RelativePose(Rt, tt).essential())
    h1 = np.hstack([X, np.ones((20, 1))])
    # raw projective division keeps points behind the camera on the image plane
    p1 = (h1 @ projection_matrix(K, e1).T)
    p2 = (h1 @ projection_matrix(K, e2).T)
    x1, x2 = p1[:, :2] / p1[:, 2:], p2[:, :2] / p2[:, 2:]
    try:
        best = select_by_cheirality(hyps, x1, x2, K, K)
    except AmbiguousCheirality:
        return
    counts = cheirality_counts(hyps, x1, x2, K, K)
    assert counts.max() < 20
    assert best in hyps


def test_tie_raises():
    hyps = [RelativePose(np.eye(3), [1, 0, 0])] * 4
    x = np.array([[512.0, 512.0]])
    with pytest.raises(AmbiguousCheirality):
        select_by_cheirality(hyps, x, x, K, K)
