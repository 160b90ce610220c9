"""Exception taxonomy shared across the pipeline.

Every error raised on bad input data or bad configuration derives from
PipelineError, so callers (notably the CLI) can map the whole family to a
single "data error" exit path. Anything else escaping a pipeline call is a
bug, not an input problem.
"""


class PipelineError(Exception):
    """Base class for all input/config/data errors raised by this package."""


class InvalidConfig(PipelineError):
    """A configuration object violates its invariants."""


class EmptyAfterClamp(PipelineError):
    """Interval does not intersect the video extent."""


class DimensionMismatch(PipelineError):
    """A feature matrix does not have the promised shape."""


class ShapeError(PipelineError):
    """Tensor shapes are incompatible with a layer or update rule."""


class StateError(PipelineError):
    """Operation called out of order (e.g. backward before forward)."""


class NoPositives(PipelineError):
    """Batch assembly found no positive candidates."""


class NoNegatives(PipelineError):
    """Batch assembly found no negative candidates."""


class NoForeground(PipelineError):
    """Classifier batch assembly found no foreground candidates."""


class NoBackground(PipelineError):
    """Classifier batch assembly found no background candidates."""


class EmptySegment(PipelineError):
    """A segment contains no frames after clamping to the video."""


class NoGroundTruth(PipelineError):
    """Metric evaluation requires at least one ground-truth interval."""


class ParseError(PipelineError):
    """A manifest or data file could not be parsed."""


class ValidationError(PipelineError):
    """A parsed manifest violates its schema; message lists every violation."""


class BadMagic(PipelineError):
    """Binary file does not start with the expected magic bytes."""


class TruncatedFile(PipelineError):
    """Binary file ends before the header-promised payload."""


class DimOverflow(PipelineError):
    """A dimension does not fit the on-disk u32 header field."""


class ConfigError(PipelineError):
    """Synthetic-dataset configuration is unsatisfiable."""
