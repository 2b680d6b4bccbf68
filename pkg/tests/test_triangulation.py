import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from epiforge.camera import Pose2D, Pose3D, project_pose, projection_matrix
from epiforge.errors import EmptyOverlap, NoVisibleJoints, ParallelRays
from epiforge.metrics import mpjpe
from epiforge.synth import generate_poses, generate_rig, observe
from epiforge.triangulation import (
    dlt_reprojection_error,
    fundamental_from_projections,
    optimal_correction,
    smooth_l1,
    smooth_l1_loss,
    triangulate_dlt,
    triangulate_polynomial,
    triangulate_pose,
    vector_median,
)


@pytest.fixture(scope="module")
def cams():
    rig = generate_rig(4, seed=21)
    return rig, [projection_matrix(k, e) for k, e in rig]


def proj(P, X):
    h = P @ np.append(X, 1.0)
    return h[:2] / h[2]


def test_dlt_roundtrip(cams):
    _, (P1, P2, *_) = cams
    X = np.array([100.0, -50.0, 2000.0])
    np.testing.assert_allclose(triangulate_dlt(proj(P1, X), proj(P2, X), P1, P2), X, atol=1e-6)


def test_dlt_identical_cameras(cams):
    _, (P1, *_) = cams
    X = np.array([100.0, -50.0, 200.0])
    with pytest.raises(ParallelRays):
        triangulate_dlt(proj(P1, X), proj(P1, X), P1, P1)


def test_fundamental_from_projections_is_consistent(cams, rng):
    _, (P1, P2, *_) = cams
    F = fundamental_from_projections(P1, P2)
    for X in rng.normal(scale=500.0, size=(20, 3)):
        assert abs(np.append(proj(P1, X), 1) @ F.F @ np.append(proj(P2, X), 1)) < 1e-9


def test_polynomial_noiseless_equals_dlt(cams, rng):
    _, (P1, P2, *_) = cams
    F = fundamental_from_projections(P1, P2)
    for X in rng.normal(scale=500.0, size=(20, 3)):
        u1, u2 = proj(P1, X), proj(P2, X)
        np.testing.assert_allclose(triangulate_polynomial(u1, u2, F, P1, P2), triangulate_dlt(u1, u2, P1, P2), atol=1e-6)
        np.testing.assert_allclose(triangulate_polynomial(u1, u2, F, P1, P2), X, atol=1e-6)


def test_polynomial_beats_dlt_under_noise(cams, rng):
    _, (P1, P2, *_) = cams
    F = fundamental_from_projections(P1, P2)
    wins = 0
    n = 1000
    for X in rng.normal(scale=500.0, size=(n, 3)):
        u1 = proj(P1, X) + rng.normal(size=2)
        u2 = proj(P2, X) + rng.normal(size=2)
        _, c1, c2 = triangulate_polynomial(u1, u2, F, P1, P2, return_corrected=True)
        corr = np.sum((c1 - u1) ** 2) + np.sum((c2 - u2) ** 2)
        wins += corr <= dlt_reprojection_error(u1, u2, P1, P2) + 1e-12
        assert abs(np.append(c1, 1) @ F.F @ np.append(c2, 1)) < 1e-9
    assert wins == n


def _brute_force_correction(u1, u2, F, n=20000):
    # scan lines through the image-2 epipole by angle, refine the best bracket;
    # each line l2 pairs with l1 = F p for any other point p on l2
    e2 = np.linalg.svd(F)[2][-1]
    E = e2[:2] / e2[2]

    def cost(th):
        c, s = np.cos(th), np.sin(th)
        l2 = np.array([-s, c, s * E[0] - c * E[1]])
        l1 = F @ np.array([E[0] + c, E[1] + s, 1.0])
        d1 = (l1 @ np.append(u1, 1.0)) ** 2 / (l1[0] ** 2 + l1[1] ** 2)
        d2 = (l2 @ np.append(u2, 1.0)) ** 2 / (l2[0] ** 2 + l2[1] ** 2)
        return d1 + d2

    grid = np.linspace(0.0, np.pi, n, endpoint=False)
    vals = np.array([cost(t) for t in grid])
    i = int(np.argmin(vals))
    step = np.pi / n
    res = minimize_scalar(cost, bounds=(grid[i] - step, grid[i] + step), method="bounded", options={"xatol": 1e-13})
    return min(res.fun, vals[i])


def test_correction_matches_brute_force_scan(cams, rng):
    _, (P1, P2, *_) = cams
    F = fundamental_from_projections(P1, P2)
    for X in rng.normal(scale=500.0, size=(5, 3)):
        u1 = proj(P1, X) + rng.normal(scale=3.0, size=2)
        u2 = proj(P2, X) + rng.normal(scale=3.0, size=2)
        c1, c2 = optimal_correction(u1, u2, F)
        got = np.sum((c1 - u1) ** 2) + np.sum((c2 - u2) ** 2)
        ref = _brute_force_correction(u1, u2, F.F)
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_triangulate_pose_two_views(cams):
    rig, Ps = cams
    pose = generate_poses(1, seed=1)[0]
    views = [(project_pose(pose, *rig[i]), Ps[i]) for i in range(2)]
    tp = triangulate_pose(views)
    assert tp.pose.visibility.all()
    assert (tp.per_joint_views == 2).all()
    assert mpjpe(tp.pose, pose, root=None) < 1e-6
    assert tp.reprojection_rmse < 1e-6


def test_triangulate_pose_occlusion_pairs(cams):
    rig, Ps = cams
    pose = generate_poses(1, seed=2)[0]
    obs = [project_pose(pose, *c) for c in rig]
    vis = obs[1].visibility.copy()
    vis[5] = False
    j = obs[1].joints.copy()
    j[5] = np.nan
    obs[1] = Pose2D(j, vis)
    tp = triangulate_pose(list(zip(obs, Ps)))
    # joint 5: only pair (3, 4) in 1-based numbering -> 2 views
    assert tp.per_joint_views[5] == 2
    assert (np.delete(tp.per_joint_views, 5) == 4).all()
    assert mpjpe(tp.pose, pose, root=None) < 1e-6


def test_joint_occluded_everywhere(cams):
    rig, Ps = cams
    pose = generate_poses(1, seed=3)[0]
    obs = []
    for c in rig:
        p = project_pose(pose, *c)
        vis = p.visibility.copy()
        vis[7] = False
        obs.append(Pose2D(np.where(vis[:, None], p.joints, np.nan), vis))
    tp = triangulate_pose(list(zip(obs, Ps)))
    assert not tp.pose.visibility[7]
    assert tp.per_joint_views[7] < 2
    assert tp.pose.visibility.sum() == 16


def test_no_visible_joints(cams):
    _, Ps = cams
    empty = Pose2D(np.full((17, 2), np.nan), np.zeros(17, bool))
    with pytest.raises(NoVisibleJoints):
        triangulate_pose([(empty, Ps[0]), (empty, Ps[1])])


def test_vector_median_examples():
    np.testing.assert_array_equal(vector_median([[1.0, 2.0, 3.0]]), [1.0, 2.0, 3.0])
    cands = np.array([[0.0, 0, 0], [0, 0, 1], [0, 0, 10]])
    sums = [sum(np.linalg.norm(a - b) for b in cands) for a in cands]
    assert sums == [11.0, 10.0, 19.0]
    np.testing.assert_array_equal(vector_median(cands), cands[int(np.argmin(sums))])
    np.testing.assert_array_equal(vector_median([[2.0, 2, 2]] * 4), [2.0, 2, 2])


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=8))
def test_vector_median_is_member(pts):
    pts = np.array(pts)
    m = vector_median(pts)
    assert any(np.array_equal(m, p) for p in pts)


def test_geometric_median_flag():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    g = vector_median(pts, geometric=True)
    # Fermat point of a right isosceles triangle is off the vertices
    assert not any(np.allclose(g, p) for p in pts)
    grads = sum((g - p) / np.linalg.norm(g - p) for p in pts)
    assert np.linalg.norm(grads) < 1e-6


def test_smooth_l1_values():
    a = Pose3D(np.zeros((2, 3)))
    assert smooth_l1_loss(a, a) == 0.0
    assert smooth_l1(0.5) == 0.125
    assert smooth_l1(2.0) == 1.5
    b = Pose3D(np.array([[0.5, 0, 0], [0, 0, 0]]))
    assert smooth_l1_loss(b, a) == pytest.approx(0.125 / 6)


def test_smooth_l1_c1_at_one():
    h = 1e-7
    assert smooth_l1(1.0) == 0.5
    left = (smooth_l1(1.0) - smooth_l1(1.0 - h)) / h
    right = (smooth_l1(1.0 + h) - smooth_l1(1.0)) / h
    assert left == pytest.approx(1.0, abs=1e-6)
    assert right == pytest.approx(1.0, abs=1e-6)


def test_smooth_l1_visibility():
    a = Pose3D(np.zeros((2, 3)), [True, False])
    b = Pose3D(np.ones((2, 3)), [False, True])
    with pytest.raises(EmptyOverlap):
        smooth_l1_loss(a, b)


def test_noise_monotonic():
    rig = generate_rig(4, seed=4)
    poses = generate_poses(100, seed=6)
    errs = []
    for sigma in (0.0, 0.5, 1.0, 2.0, 4.0):
        obs, _ = observe(poses, rig, noise_sigma=sigma, seed=10)
        Ps = [projection_matrix(k, e) for k, e in rig]
        e = np.mean([mpjpe(triangulate_pose([(obs[c][f], Ps[c]) for c in range(4)]).pose, poses[f], root=None) for f in range(100)])
        errs.append(e)
    assert errs[0] < 1e-6
    assert all(a <= b for a, b in zip(errs, errs[1:]))
