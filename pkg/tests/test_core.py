import pytest
from hypothesis import given, strategies as st

from tempodet.core import Detection, GroundTruthAnnotation, TemporalInterval, clamp_to_video, iou
from tempodet.errors import EmptyAfterClamp


def interval(begin, end):
    return TemporalInterval(begin, end)


intervals = st.builds(
    lambda begin, length: TemporalInterval(begin, begin + length),
    st.integers(-1000, 1000),
    st.integers(1, 500),
)


class TestTemporalInterval:
    def test_length(self):
        assert interval(3, 10).length == 7

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            TemporalInterval(5, 5)
        with pytest.raises(ValueError):
            TemporalInterval(5, 3)

    def test_negative_begin_allowed(self):
        assert interval(-8, 24).length == 32


class TestIou:
    def test_identity(self):
        assert iou(interval(0, 10), interval(0, 10)) == 1.0

    def test_disjoint(self):
        assert iou(interval(0, 10), interval(20, 30)) == 0.0

    def test_partial_overlap(self):
        # intersection 5 frames, union 15 frames
        assert iou(interval(0, 10), interval(5, 15)) == pytest.approx(1 / 3)

    def test_touching_intervals_are_disjoint(self):
        assert iou(interval(0, 10), interval(10, 20)) == 0.0

    @given(intervals, intervals)
    def test_symmetric(self, a, b):
        assert iou(a, b) == iou(b, a)

    @given(intervals)
    def test_self_iou_is_exactly_one(self, a):
        assert iou(a, a) == 1.0

    @given(intervals, intervals, st.integers(-10000, 10000))
    def test_translation_invariant(self, a, b, shift):
        a2 = interval(a.begin + shift, a.end + shift)
        b2 = interval(b.begin + shift, b.end + shift)
        assert iou(a, b) == iou(a2, b2)

    @given(intervals, intervals)
    def test_bounded(self, a, b):
        assert 0.0 <= iou(a, b) <= 1.0


class TestClampToVideo:
    def test_clamps_left_overhang(self):
        assert clamp_to_video(interval(-8, 24), 64) == interval(0, 24)

    def test_inside_is_identity(self):
        assert clamp_to_video(interval(10, 20), 64) == interval(10, 20)

    def test_fully_outside_raises(self):
        with pytest.raises(EmptyAfterClamp):
            clamp_to_video(interval(70, 80), 64)

    def test_clamps_right_overhang(self):
        assert clamp_to_video(interval(50, 90), 64) == interval(50, 64)


class TestAnnotations:
    def test_background_class_rejected(self):
        with pytest.raises(ValueError):
            GroundTruthAnnotation("v", [(interval(0, 10), 0)])

    def test_detection_requires_finite_score(self):
        with pytest.raises(ValueError):
            Detection("v", interval(0, 10), 1, float("nan"))

    def test_detection_requires_foreground_class(self):
        with pytest.raises(ValueError):
            Detection("v", interval(0, 10), 0, 0.5)
