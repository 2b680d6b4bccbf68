import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from epiforge.heatmap import HeatmapVolume, read_volume, soft_argmax_2d, soft_argmax_3d, write_volume


def one_hot(shape, peak, value=1e4):
    # two joints: poses need at least two
    s = np.zeros((2, *shape))
    s[(0, *peak)] = value
    s[(1, *peak)] = value
    return HeatmapVolume(s)


def test_delta():
    out = soft_argmax_3d(one_hot((16, 24, 8), (10, 20, 5)), 1.0).joints[0]
    np.testing.assert_allclose(out, [10, 20, 5], atol=1e-6)
    np.testing.assert_allclose(soft_argmax_2d(one_hot((16, 24, 8), (10, 20, 5))).joints[0], [10, 20], atol=1e-6)


def test_uniform_center():
    vol = HeatmapVolume(np.zeros((2, 8, 8, 8)))
    np.testing.assert_allclose(soft_argmax_3d(vol).joints[0], [3.5, 3.5, 3.5], atol=1e-12)
    vol = HeatmapVolume(np.zeros((2, 6, 9, 4)))
    np.testing.assert_allclose(soft_argmax_2d(vol).joints[0], [2.5, 4.0], atol=1e-12)


def test_two_peaks_midpoint():
    s = np.zeros((2, 8, 8, 8))
    s[0, 0, 0, 0] = s[0, 7, 7, 7] = 1e4
    np.testing.assert_allclose(soft_argmax_3d(HeatmapVolume(s)).joints[0], [3.5, 3.5, 3.5], atol=1e-12)


@given(
    st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 3)),
    st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)),
)
def test_shift_equivariance(peak, shift):
    shape = (10, 10, 8)
    a = soft_argmax_3d(one_hot(shape, peak)).joints[0]
    moved = tuple(p + d for p, d in zip(peak, shift))
    b = soft_argmax_3d(one_hot(shape, moved)).joints[0]
    np.testing.assert_array_equal(b - a, np.array(shift, dtype=float))


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 20.0))
def test_marginal_consistency(seed, temperature):
    rng = np.random.default_rng(seed)
    vol = HeatmapVolume(rng.normal(scale=3.0, size=(3, 5, 6, 4)))
    a = soft_argmax_3d(vol, temperature).joints[:, :2]
    b = soft_argmax_2d(vol, temperature).joints
    assert np.abs(a - b).max() <= 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_constant_shift_invariance(seed, c):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=(2, 4, 5, 3))
    a = soft_argmax_3d(HeatmapVolume(s)).joints
    b = soft_argmax_3d(HeatmapVolume(s + c)).joints
    np.testing.assert_allclose(a, b, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_output_in_grid_hull(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(scale=10.0, size=(2, 4, 5, 3))
    out = soft_argmax_3d(HeatmapVolume(s)).joints
    assert (out >= 0).all() and (out <= np.array([3, 4, 2]) + 1e-12).all()


def test_bad_volumes():
    with pytest.raises(ValueError):
        HeatmapVolume(np.full((1, 2, 2, 2), np.inf))
    with pytest.raises(ValueError):
        soft_argmax_3d(HeatmapVolume(np.zeros((1, 2, 2, 2))), temperature=0.0)


def test_volume_file_roundtrip(tmp_path, rng):
    s = rng.normal(size=(3, 4, 5, 6)).astype(np.float32)
    path = tmp_path / "v.bin"
    write_volume(path, HeatmapVolume(s))
    raw = path.read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert header == b'{"J": 3, "w": 4, "h": 5, "d": 6}'
    assert payload == s.astype("<f4").tobytes()
    back = read_volume(path)
    np.testing.assert_array_equal(back.scores, s.astype(float))
