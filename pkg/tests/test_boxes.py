# File Name: test_boxes.py
# Created By: ZW
# Created On: 2023-03-06
# Purpose: tests for box representations, clipping, delta coding and overlap

# module imports
# ----------------------------------------------------------------------------
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitground.core.boxes import (BoxParams, ImageDims, PixelBox, clip_box, decode_deltas, encode_deltas,
                                  from_params, to_params)
from sitground.core.errors import BoxError
from sitground.operations.intersect import intersection_area, iou

DIMS = ImageDims(100, 80)

boxes = st.builds(
    PixelBox,
    st.floats(-50, 150),
    st.floats(-50, 130),
    st.floats(0.5, 100),
    st.floats(0.5, 100),
)


# test definitions
# ----------------------------------------------------------------------------

def test_iou_examples():
    a = PixelBox(0, 0, 10, 10)
    assert iou(a, PixelBox(0, 0, 10, 10)) == 1.0
    assert iou(a, PixelBox(100, 100, 5, 5)) == 0.0
    assert iou(a, PixelBox(5, 0, 10, 10)) == pytest.approx(1 / 3)
    assert intersection_area(a, PixelBox(5, 0, 10, 10)) == 50.0


def test_touching_boxes_do_not_overlap():
    assert iou(PixelBox(0, 0, 10, 10), PixelBox(10, 0, 10, 10)) == 0.0


# x2 - x differs from w in the last bit for boxes like this one
def test_self_overlap_is_exact(small_corpus):
    assert iou(PixelBox(389.57, 240.78, 55.47, 62.3), PixelBox(389.57, 240.78, 55.47, 62.3)) == 1.0
    for record in small_corpus.train:
        for _, box in record.boxes:
            assert iou(box, box) == 1.0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, a) == 1.0


def test_invalid_boxes_rejected():
    with pytest.raises(BoxError):
        PixelBox(0, 0, 0, 10)
    with pytest.raises(BoxError):
        PixelBox(0, float("nan"), 5, 5)
    with pytest.raises(BoxError):
        ImageDims(0, 10)
    with pytest.raises(BoxError):
        BoxParams(0.5, 0.5, 0.0, 1.0)


def test_to_params_examples():
    full = to_params(PixelBox(0, 0, 100, 50), ImageDims(100, 50))
    assert full.as_vector().tolist() == [0.5, 0.5, 1.0, 2.0]
    p = to_params(PixelBox(10, 10, 20, 40), ImageDims(100, 100))
    assert p.as_vector() == pytest.approx([0.2, 0.3, 0.08, 0.5])


def test_to_params_rejects_box_outside_frame():
    with pytest.raises(BoxError):
        to_params(PixelBox(200, 200, 10, 10), ImageDims(100, 100))


def test_from_params_examples():
    dims = ImageDims(100, 100)
    assert from_params(BoxParams(0.5, 0.5, 1.0, 1.0), dims).as_tuple() == pytest.approx((0, 0, 100, 100))
    assert from_params(BoxParams(0.2, 0.3, 0.08, 0.5), dims).as_tuple() == pytest.approx((10, 10, 20, 40))


def test_from_params_clips_to_frame():
    box = from_params(BoxParams(0.02, 0.98, 0.1, 1.0), DIMS)
    assert box.x >= 0 and box.y >= 0
    assert box.x2 <= DIMS.width + 1e-9 and box.y2 <= DIMS.height + 1e-9


def test_params_round_trip():
    params = BoxParams(0.4, 0.55, 0.05, 0.8)
    back = to_params(from_params(params, DIMS), DIMS)
    assert back.as_vector() == pytest.approx(params.as_vector(), abs=1e-9)


@given(boxes)
def test_clip_keeps_box_inside_frame(box):
    clipped = clip_box(box, DIMS)
    assert clipped.x >= 0 and clipped.y >= 0
    assert clipped.x2 <= DIMS.width + 1e-9 and clipped.y2 <= DIMS.height + 1e-9
    assert clipped.w >= 1.0 - 1e-9 and clipped.h >= 1.0 - 1e-9


@given(boxes)
def test_clip_is_idempotent(box):
    once = clip_box(box, DIMS)
    assert clip_box(once, DIMS).as_tuple() == pytest.approx(once.as_tuple(), abs=1e-9)


def test_clip_leaves_inside_box_alone():
    box = PixelBox(10, 10, 20, 30)
    assert clip_box(box, DIMS) == box


def test_delta_coding_inverts():
    ref, target = PixelBox(10, 20, 30, 40), PixelBox(14, 18, 45, 20)
    deltas = encode_deltas(ref, target)
    assert deltas[0] == pytest.approx((target.cx - ref.cx) / ref.w)
    assert decode_deltas(ref, deltas).as_tuple() == pytest.approx(target.as_tuple())
    assert encode_deltas(ref, ref) == pytest.approx((0, 0, 0, 0))


def test_snapped_rounds_to_hundredths():
    assert PixelBox(1.234, 2.346, 3.456, 4.5678).snapped().as_tuple() == (1.23, 2.35, 3.46, 4.57)
