"""Fixed-size feature sampling for proposals and their context windows.

Every interval, whatever its length, is summarized by ``n`` feature rows
taken at the centers of ``n`` equal bins (no pooling). Sampled frame indices
outside the video extent produce all-zero rows. The context window shares
the proposal's center and scales its length; factor 2 reproduces the next
pyramid level.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .anchors import Proposal
from .core import TemporalInterval
from .errors import DimensionMismatch


@dataclass(frozen=True)
class FeatureSequence:
    """Per-frame feature matrix for one video, shape (T, D), stored float32."""

    video_id: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionMismatch(f"feature matrix must be (T, D) with T, D >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DimensionMismatch(f"feature matrix for {self.video_id!r} contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SampledFeatures:
    """n feature rows drawn from one interval; shape (n, D) regardless of length."""

    values: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ContextPair:
    """Samples from a proposal interval and from its same-center context window."""

    inner: SampledFeatures
    outer: SampledFeatures

    def __post_init__(self):
        if self.inner.values.shape != self.outer.values.shape:
            raise DimensionMismatch(
                f"inner/outer shapes differ: {self.inner.values.shape} vs {self.outer.values.shape}"
            )


def sample_frame_indices(interval: TemporalInterval, n: int) -> np.ndarray:
    """Center-of-bin sample positions: floor(begin + (j + 0.5) * length / n)."""
    j = np.arange(n, dtype=np.float64)
    return np.floor(interval.begin + (j + 0.5) * interval.length / n).astype(np.int64)


def sample_uniform(fs: FeatureSequence, interval: TemporalInterval, n: int) -> SampledFeatures:
    """Sample ``n`` rows uniformly from an interval, zero-padding out-of-video frames."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    idx = sample_frame_indices(interval, n)
    inside = (idx >= 0) & (idx < fs.num_frames)
    out = np.zeros((n, fs.dim), dtype=np.float64)
    out[inside] = fs.values[idx[inside]].astype(np.float64)
    return SampledFeatures(values=out)


def context_interval(p: Proposal, scale_factor: float) -> TemporalInterval:
    """Interval with p's center and length scaled by ``scale_factor`` (>= 1).

    Lengths and begins round to the nearest integer, halves toward +inf, so
    the center moves by at most half a frame.
    """
    if scale_factor < 1:
        raise ValueError(f"scale_factor must be >= 1, got {scale_factor}")
    center = p.interval.center
    length = math.floor(scale_factor * p.interval.length + 0.5)
    begin = math.floor(center - length / 2 + 0.5)
    return TemporalInterval(begin, begin + length)


def build_context_pair(
    fs: FeatureSequence,
    p: Proposal,
    n: int,
    scale_factor: float,
) -> ContextPair:
    """Sample the proposal interval and its context window into an (n, D) pair."""
    return ContextPair(
        inner=sample_uniform(fs, p.interval, n),
        outer=sample_uniform(fs, context_interval(p, scale_factor), n),
    )
