import numpy as np
import pytest

from tempodet.anchors import AnchorConfig, Proposal, generate_anchors, pyramid_coverage_recall
from tempodet.core import GroundTruthAnnotation, TemporalInterval, iou
from tempodet.errors import InvalidConfig


def brute_force_anchors(base_length, num_scales, num_frames):
    """Independent enumeration: walk every candidate start and scale directly."""
    stride = base_length // 2
    out = []
    start = 0
    while start < num_frames:
        center = start + base_length // 2
        for k in range(1, num_scales + 1):
            length = base_length * 2 ** (k - 1)
            out.append((center - length // 2, center + length // 2, k))
        start += stride
    return out


def brute_force_coverage(anchors, gt_intervals, threshold):
    hits = 0
    for g in gt_intervals:
        matched = False
        for p in anchors:
            if iou(p.interval, g) >= threshold:
                matched = True
        hits += matched
    return hits / len(gt_intervals)


class TestGenerateAnchors:
    def test_reference_pyramid(self):
        props = generate_anchors(AnchorConfig(16, 3), 64)
        assert len(props) == 24
        first_position = [p for p in props if p.position_index == 0]
        assert [(p.interval.begin, p.interval.end) for p in first_position] == [(0, 16), (-8, 24), (-24, 40)]

    def test_two_positions_on_exact_fit(self):
        props = generate_anchors(AnchorConfig(16, 1), 16)
        assert [(p.interval.begin, p.interval.end) for p in props] == [(0, 16), (8, 24)]

    def test_minimal_video(self):
        props = generate_anchors(AnchorConfig(2, 1), 1)
        assert [(p.interval.begin, p.interval.end) for p in props] == [(0, 2)]

    def test_rejects_odd_base_length(self):
        with pytest.raises(InvalidConfig):
            AnchorConfig(15, 3)

    def test_rejects_zero_scales(self):
        with pytest.raises(InvalidConfig):
            AnchorConfig(16, 0)

    def test_matches_brute_force_enumeration(self):
        for base, scales, frames in [(16, 3, 64), (16, 1, 16), (2, 1, 1), (8, 4, 100), (32, 2, 33)]:
            got = [(p.interval.begin, p.interval.end, p.scale_index)
                   for p in generate_anchors(AnchorConfig(base, scales), frames)]
            assert got == brute_force_anchors(base, scales, frames)

    def test_count_law(self):
        for base in (4, 8, 16, 32):
            for scales in (1, 2, 3, 4):
                for frames in (1, 7, 16, 63, 64, 65, 250):
                    positions = (frames - 1) // (base // 2) + 1
                    assert len(generate_anchors(AnchorConfig(base, scales), frames)) == positions * scales

    def test_scale_lengths_and_shared_centers(self):
        cfg = AnchorConfig(16, 4)
        by_position = {}
        for p in generate_anchors(cfg, 200):
            assert p.interval.length == cfg.scale_length(p.scale_index)
            by_position.setdefault(p.position_index, []).append(p)
        for group in by_position.values():
            centers = {p.interval.center for p in group}
            assert len(centers) == 1


class TestPyramidCoverageRecall:
    def test_exact_match(self):
        gt = GroundTruthAnnotation("v", [(TemporalInterval(8, 24), 1)])
        props = generate_anchors(AnchorConfig(16, 3), 64)
        assert pyramid_coverage_recall(props, gt, 0.99) == 1.0

    def test_no_coverage(self):
        gt = GroundTruthAnnotation("v", [(TemporalInterval(100, 120), 1)])
        props = [Proposal(TemporalInterval(0, 16), 0, 1)]
        assert pyramid_coverage_recall(props, gt, 0.1) == 0.0

    def test_matches_brute_force_on_random_ground_truth(self):
        rng = np.random.default_rng(7)
        props = generate_anchors(AnchorConfig(16, 3), 256)
        for _ in range(20):
            gt_intervals = []
            for _ in range(rng.integers(1, 6)):
                begin = int(rng.integers(0, 230))
                gt_intervals.append(TemporalInterval(begin, begin + int(rng.integers(4, 26))))
            gt = GroundTruthAnnotation("v", [(g, 1) for g in gt_intervals])
            for threshold in (0.3, 0.5, 0.7, 0.9):
                expected = brute_force_coverage(props, gt_intervals, threshold)
                assert pyramid_coverage_recall(props, gt, threshold) == expected

    def test_monotone_in_num_scales(self):
        rng = np.random.default_rng(11)
        gt_intervals = []
        for _ in range(8):
            begin = int(rng.integers(0, 200))
            gt_intervals.append((TemporalInterval(begin, begin + int(rng.integers(6, 50))), 1))
        gt = GroundTruthAnnotation("v", gt_intervals)
        thresholds = [0.5 + 0.05 * i for i in range(10)]
        previous = [0.0] * len(thresholds)
        for scales in (1, 2, 3, 4):
            props = generate_anchors(AnchorConfig(16, scales), 256)
            current = [pyramid_coverage_recall(props, gt, t) for t in thresholds]
            assert all(c >= p for c, p in zip(current, previous))
            previous = current
