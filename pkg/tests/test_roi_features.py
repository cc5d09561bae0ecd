import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddq import _pykernels
from ddq.errors import FormatError, ValidationError
from ddq.roi_features import (FeatureMap, assign_level, frf_levels, frf_roi_align, load_feature_maps,
                              qde_fuse, roi_align, save_feature_maps)
from oracles import dense_roi_align


def random_box(rng, w, h, stride):
    x1, y1 = rng.uniform(-stride, w * stride), rng.uniform(-stride, h * stride)
    bw, bh = rng.uniform(0.5, 3 * w) * stride / 2, rng.uniform(0.5, 3 * h) * stride / 2
    return [x1, y1, x1 + bw, y1 + bh]


def test_constant_map_exact():
    fm = FeatureMap(3, np.full((9, 11, 3), 0.1))
    out = roi_align(fm, [5.3, 7.7, 61.0, 40.2])
    assert out.shape == (7, 7, 3)
    assert (out == 0.1).all()


def test_ramp_center():
    data = np.tile(np.arange(10.0)[None, :, None], (6, 1, 1))
    fm = FeatureMap(3, data)
    # feature-x 3.5 is pixel (3.5 + 0.5) * 8 = 32
    out = roi_align(fm, [24, 8, 40, 24], out_size=(1, 1))
    assert out[0, 0, 0] == pytest.approx(3.5, abs=1e-12)


def test_shape_and_validation():
    fm = FeatureMap(4, np.zeros((4, 4, 2)))
    assert roi_align(fm, [0, 0, 30, 30], (3, 5)).shape == (3, 5, 2)
    with pytest.raises(ValidationError):
        roi_align(fm, [5, 5, 5, 9])
    with pytest.raises(ValidationError):
        FeatureMap(3, np.zeros((0, 3, 1)))


def test_linearity_and_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, w, c = rng.integers(2, 12, 3)
        f, g = rng.normal(size=(h, w, c)), rng.normal(size=(h, w, c))
        a, b = rng.normal(size=2)
        lvl = int(rng.integers(3, 6))
        box = random_box(rng, w, h, 2 ** lvl)
        af = roi_align(FeatureMap(lvl, f), box)
        ag = roi_align(FeatureMap(lvl, g), box)
        np.testing.assert_allclose(roi_align(FeatureMap(lvl, a * f + b * g), box), a * af + b * ag, atol=1e-9)
        np.testing.assert_allclose(af, dense_roi_align(f, box, 2 ** lvl, (7, 7), 2), atol=1e-6)


def test_shift_equivariance():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(12, 12, 2))
    shifted = np.zeros_like(data)
    shifted[:, 1:] = data[:, :-1]
    box = [20, 20, 60, 70]
    a = roi_align(FeatureMap(3, data), box)
    b = roi_align(FeatureMap(3, shifted), [box[0] + 8, box[1], box[2] + 8, box[3]])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_backends_bit_identical(backend):
    rng = np.random.default_rng(2)
    for _ in range(30):
        data = rng.normal(size=(7, 9, 3))
        coords = np.sort(rng.uniform(-2, 10, 4).reshape(2, 2), 0).ravel()
        args = (data, coords[0], coords[1], coords[2], coords[3], 3, 4, 2)
        np.testing.assert_array_equal(backend.roi_align(*args), _pykernels.roi_align(*args))


def test_assign_level_examples():
    assert assign_level([0, 0, 224, 224]) == 4
    assert assign_level([0, 0, 32, 32]) == 3
    assert assign_level([0, 0, 1792, 1792]) == 7
    assert frf_levels(3) == [3, 4] and frf_levels(7) == [6, 7] and frf_levels(5) == [4, 5, 6]


def _pyramid_maps(fill):
    return {lvl: FeatureMap(lvl, fill(lvl)) for lvl in range(3, 8)}


def test_frf_constant_and_identical():
    maps = _pyramid_maps(lambda lvl: np.full((8, 8, 2), 1.5))
    assert (frf_roi_align(maps, [0, 0, 40, 40]) == 1.5).all()

    def linear_field(lvl):
        # the same function of pixel position sampled at each level's cell centers
        s = 2 ** lvl
        n = -(-1024 // s)
        xy = (np.arange(n) + 0.5) * s
        return np.stack([0.01 * xy[None, :] + 0.02 * xy[:, None], -0.03 * xy[:, None] + 1.0 + 0 * xy[None, :]], -1)

    maps = _pyramid_maps(linear_field)
    box = [300, 300, 600, 700]
    np.testing.assert_allclose(frf_roi_align(maps, box), roi_align(maps[3], box), atol=1e-9)


def test_frf_missing_level():
    maps = _pyramid_maps(lambda lvl: np.zeros((4, 4, 1)))
    del maps[6]
    with pytest.raises(ValidationError):
        frf_roi_align(maps, [0, 0, 10, 10])


def test_qde_examples():
    rng = np.random.default_rng(0)
    d, c = 5, 3
    query = rng.normal(size=d)
    roi = np.full((7, 7, c), 2.0)
    ident = np.vstack([np.eye(d), np.zeros((c, d))])
    np.testing.assert_array_equal(qde_fuse(query, roi, ident), query)
    m = rng.normal(size=(c, d))
    proj = np.vstack([np.zeros((d, d)), m])
    np.testing.assert_allclose(qde_fuse(query, roi, proj), 2.0 * np.ones(c) @ m, atol=1e-12)
    assert qde_fuse(np.zeros(256), np.zeros((7, 7, 256)), np.zeros((512, 256))).shape == (256,)
    with pytest.raises(ValidationError):
        qde_fuse(query, roi, np.zeros((d, d)))


@given(st.integers(1, 16), st.integers(1, 16))
def test_qde_dim(d, c):
    out = qde_fuse(np.ones(d), np.ones((2, 2, c)), np.ones((d + c, d)))
    assert out.shape == (d,)


@pytest.mark.parametrize("suffix", [".npz", ".json"])
def test_feature_map_io(tmp_path, suffix):
    rng = np.random.default_rng(0)
    maps = {lvl: FeatureMap(lvl, rng.normal(size=(3, 4, 2))) for lvl in (3, 4)}
    path = save_feature_maps(tmp_path / f"maps{suffix}", maps)
    back = load_feature_maps(path)
    for lvl in maps:
        np.testing.assert_array_equal(back[lvl].data, maps[lvl].data)


def test_feature_map_io_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format_version": 99, "maps": []}')
    with pytest.raises(FormatError):
        load_feature_maps(bad)
    with pytest.raises(FormatError):
        load_feature_maps(tmp_path / "missing.npz")
