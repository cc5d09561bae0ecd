import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddq.errors import ValidationError
from ddq.geometry import Box, BoxList, clip_boxes, convert, giou, iou, pairwise_giou, pairwise_iou
from oracles import raster_giou, raster_iou, scalar_iou

coord = st.floats(0, 100, allow_nan=False)


@st.composite
def boxes(draw, min_size=0.0):
    x1, y1 = draw(coord), draw(coord)
    w = draw(st.floats(min_size, 50))
    h = draw(st.floats(min_size, 50))
    return [x1, y1, x1 + w, y1 + h]


def test_iou_examples():
    assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert iou([0, 0, 1, 1], [5, 5, 6, 6]) == 0.0
    assert iou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1 / 7, abs=1e-15)


def test_giou_examples():
    assert giou([0, 0, 1, 1], [2, 2, 3, 3]) == pytest.approx(-7 / 9, abs=1e-15)
    assert giou([0, 0, 1, 1], [1, 0, 2, 1]) == 0.0
    assert giou([3, 4, 10, 5], [3, 4, 10, 5]) == 1.0


def test_giou_two_degenerate_boxes_rejected():
    with pytest.raises(ValidationError):
        giou([1, 1, 1, 1], [2, 2, 2, 2])


def test_pairwise_examples():
    a = [[0, 0, 2, 2], [1, 1, 3, 3]]
    np.testing.assert_allclose(pairwise_iou(a, a), [[1, 1 / 7], [1 / 7, 1]], atol=1e-15)
    assert pairwise_iou(np.zeros((0, 4)), a).shape == (0, 2)
    assert pairwise_iou([[0, 0, 2, 2]], [[0, 0, 2, 2]]).tolist() == [[1.0]]


def test_convert_examples():
    np.testing.assert_array_equal(convert([0, 0, 2, 2], "xyxy", "cxcywh"), [1, 1, 2, 2])
    np.testing.assert_array_equal(convert([1, 1, 2, 2], "cxcywh", "xyxy"), [0, 0, 2, 2])
    with pytest.raises(ValidationError):
        convert([0, 0, 1, 1], "xyxy", "yxyx")


def test_box_validation():
    with pytest.raises(ValidationError):
        Box(2, 0, 1, 1)
    with pytest.raises(ValidationError):
        Box(0, float("nan"), 1, 1)
    b = Box(0, 0, 0, 4)
    assert b.degenerate and b.area == 0.0
    assert Box(-5, -5, 20, 3).clip(10, 10) == Box(0, 0, 10, 3)


def test_boxlist_parallel_lengths():
    with pytest.raises(ValidationError):
        BoxList([[0, 0, 1, 1]], scores=[0.1, 0.2])
    bl = BoxList([[0, 0, 1, 1], [0, 0, 2, 2]], [0.3, 0.4])
    assert len(bl.take([1])) == 1 and bl.take([1]).scores.tolist() == [0.4]


def test_clip_boxes_inside_image():
    out = clip_boxes([[-4, -1, 30, 9]], 20, 8)
    assert out.tolist() == [[0, 0, 20, 8]]


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(scalar_iou(a, b), abs=1e-12)


@given(boxes(min_size=0.1))
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


@given(boxes(min_size=0.1), boxes(min_size=0.1))
def test_giou_bounds(a, b):
    g = giou(a, b)
    assert -1.0 - 1e-12 <= g <= iou(a, b) + 1e-12


@given(boxes(min_size=0.1))
def test_giou_equals_iou_for_nested_boxes(a):
    inner = [a[0] + 0.25 * (a[2] - a[0]), a[1], a[2], a[3]]
    assert giou(a, inner) == pytest.approx(iou(a, inner), abs=1e-12)


@given(st.lists(boxes(), min_size=0, max_size=6), st.lists(boxes(), min_size=0, max_size=6))
def test_pairwise_transpose(a, b):
    a = np.asarray(a).reshape(-1, 4)
    b = np.asarray(b).reshape(-1, 4)
    np.testing.assert_array_equal(pairwise_iou(a, b), pairwise_iou(b, a).T)


@given(boxes())
def test_convert_round_trip(a):
    back = convert(convert(a, "xyxy", "cxcywh"), "cxcywh", "xyxy")
    np.testing.assert_allclose(back, a, atol=1e-12)


def test_iou_matches_raster_oracle():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        a = np.sort(rng.uniform(0, 100, (2, 2)), axis=0).T.ravel()[[0, 2, 1, 3]]
        b = np.sort(rng.uniform(0, 100, (2, 2)), axis=0).T.ravel()[[0, 2, 1, 3]]
        extent = (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))
        worst = max(worst, abs(iou(a, b) - raster_iou(a, b, extent)))
    assert worst <= 2e-3


def test_giou_matches_raster_oracle():
    a, b = [0, 0, 1, 1], [2, 2, 3, 3]
    assert giou(a, b) == pytest.approx(raster_giou(a, b, (0, 0, 3, 3), 600), abs=2e-3)


def test_pairwise_giou_diagonal():
    a = np.array([[0, 0, 4, 4], [1, 2, 5, 9]], dtype=float)
    np.testing.assert_allclose(np.diag(pairwise_giou(a, a)), [1.0, 1.0])


def test_backends_agree_on_iou(backend):
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 50, (40, 4))
    a[:, 2:] += a[:, :2]
    ref = np.array([[scalar_iou(x, y) for y in a] for x in a])
    np.testing.assert_allclose(backend.pairwise_iou(a, a), ref, atol=1e-15)
