"""Interval and annotation primitives shared by the whole pipeline.

Intervals are half-open ``[begin, end)`` in integer frame units, so
``length == end - begin`` holds exactly and tiling arithmetic never needs
sub-frame interpolation.
"""

from dataclasses import dataclass

from .errors import EmptyAfterClamp


@dataclass(frozen=True, order=True)
class TemporalInterval:
    """Half-open frame interval [begin, end); begin may be negative before clamping."""

    begin: int
    end: int

    def __post_init__(self):
        if self.end <= self.begin:
            raise ValueError(f"interval must satisfy end > begin, got [{self.begin}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.begin

    @property
    def center(self) -> float:
        return (self.begin + self.end) / 2.0

    def intersection_length(self, other: "TemporalInterval") -> int:
        """Overlap in frames with another interval; 0 when disjoint."""
        return max(0, min(self.end, other.end) - max(self.begin, other.begin))


@dataclass(frozen=True)
class GroundTruthAnnotation:
    """Labeled activity intervals for one video.

    Class id 0 is reserved for background and never appears here; all
    intervals must lie inside [0, num_frames) of the referenced video.
    """

    video_id: str
    intervals: tuple[tuple[TemporalInterval, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        for interval, class_id in self.intervals:
            if class_id < 1:
                raise ValueError(f"annotation class ids must be >= 1, got {class_id}")


@dataclass(frozen=True)
class Detection:
    """Final pipeline output: a classified, scored interval in one video."""

    video_id: str
    interval: TemporalInterval
    class_id: int
    score: float

    def __post_init__(self):
        if not (self.score == self.score and abs(self.score) != float("inf")):
            raise ValueError("detection score must be finite")
        if self.class_id < 1:
            raise ValueError("emitted detections must carry a non-background class id")


def iou(a: TemporalInterval, b: TemporalInterval) -> float:
    """Intersection-over-union of two intervals, in [0, 1]; 0 when disjoint."""
    inter = a.intersection_length(b)
    if inter == 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union


def clamp_to_video(a: TemporalInterval, num_frames: int) -> TemporalInterval:
    """Intersect an interval with [0, num_frames).

    Raises EmptyAfterClamp when the interval lies entirely outside the video.
    """
    begin = max(a.begin, 0)
    end = min(a.end, num_frames)
    if end <= begin:
        raise EmptyAfterClamp(f"[{a.begin}, {a.end}) does not intersect [0, {num_frames})")
    return TemporalInterval(begin, end)
