"""Multi-scale anchor pyramid over a video timeline.

A sliding window of ``base_length`` frames advances at 50% overlap (stride
``base_length / 2``). At every window position the pyramid emits one
candidate interval per scale, with lengths doubling per level and all scales
sharing the window's center frame. Anchors near the video edges may extend
beyond ``[0, T)``; the feature sampler zero-pads those frames, so anchors are
deliberately not clamped here.
"""

from dataclasses import dataclass

from .core import GroundTruthAnnotation, TemporalInterval, iou
from .errors import InvalidConfig


@dataclass(frozen=True)
class AnchorConfig:
    """Pyramid geometry: base window length (even, >= 2) and scale count (>= 1)."""

    base_length: int = 16
    num_scales: int = 4

    def __post_init__(self):
        if self.base_length < 2 or self.base_length % 2 != 0:
            raise InvalidConfig(f"base_length must be even and >= 2, got {self.base_length}")
        if self.num_scales < 1:
            raise InvalidConfig(f"num_scales must be >= 1, got {self.num_scales}")

    def scale_length(self, k: int) -> int:
        """Interval length at scale k (1-based): base_length * 2**(k-1)."""
        return self.base_length * (2 ** (k - 1))


@dataclass(frozen=True)
class Proposal:
    """A candidate interval at pyramid position i, scale k; score set once ranked."""

    interval: TemporalInterval
    position_index: int
    scale_index: int
    score: float | None = None


def num_window_positions(cfg: AnchorConfig, num_frames: int) -> int:
    """Window starts are i * base_length/2 for every start strictly inside the video."""
    stride = cfg.base_length // 2
    return (num_frames - 1) // stride + 1


def generate_anchors(cfg: AnchorConfig, num_frames: int) -> list[Proposal]:
    """Enumerate the full anchor pyramid for a video of ``num_frames`` frames.

    Returns exactly M * K proposals (M window positions, K scales), ordered by
    position then scale. Each scale at a position is centered on the position's
    window center, so consecutive scales form same-center pairs.
    """
    if num_frames < 1:
        raise InvalidConfig(f"num_frames must be >= 1, got {num_frames}")
    stride = cfg.base_length // 2
    half_base = cfg.base_length // 2
    out = []
    for i in range(num_window_positions(cfg, num_frames)):
        center = i * stride + half_base
        for k in range(1, cfg.num_scales + 1):
            half = cfg.scale_length(k) // 2
            out.append(
                Proposal(
                    interval=TemporalInterval(center - half, center + half),
                    position_index=i,
                    scale_index=k,
                )
            )
    return out


def pyramid_coverage_recall(
    anchors: list[Proposal],
    gt: GroundTruthAnnotation,
    iou_threshold: float,
) -> float:
    """Fraction of ground-truth intervals covered by some anchor at IoU >= threshold.

    This is the theoretical best recall any ranker over this anchor set can
    reach at the given overlap threshold.
    """
    if not anchors:
        raise InvalidConfig("anchor set must be non-empty")
    if not gt.intervals:
        return 0.0
    hit = 0
    for gt_interval, _ in gt.intervals:
        if any(iou(p.interval, gt_interval) >= iou_threshold for p in anchors):
            hit += 1
    return hit / len(gt.intervals)
