"""Dataset ingestion, feature-file persistence, and the synthetic benchmark.

Manifest (JSON, versioned)::

    {
      "version": 1,
      "label_names": ["climbing", "digging"],
      "videos": {
        "vid_000": {
          "num_frames": 256,
          "fps": 8.0,
          "annotations": [
            {"segment": [4.0, 12.5], "unit": "seconds", "label": "climbing"},
            {"segment": [160, 208], "unit": "frames", "label": "digging"}
          ]
        }
      }
    }

Frames are the canonical unit everywhere downstream; second-based segments
convert at load time via round(seconds * fps). Class ids are 1-based indices
into ``label_names`` (0 is background).

Feature files (binary, little-endian)::

    magic "TCNF" | u32 version=1 | u32 T | u32 D | T*D float32, row-major

The synthetic generator plants class-coded activity signals on a noise
floor. Backgrounds are unit-variance Gaussian noise; an activity of class c
adds ``snr`` to feature channel c-1 over its frames; when
``boundary_signal`` is set, a dedicated transient channel additionally fires
on the two frames straddling each activity boundary. Proposals strictly
inside a long activity look identical to well-aligned ones from their inner
features alone, so only a context window can separate them - which is what
makes the context-versus-no-context comparison measurable on this data.
"""

from dataclasses import dataclass
import json
from pathlib import Path
import struct

import numpy as np

from .core import GroundTruthAnnotation, TemporalInterval
from .errors import (
    BadMagic,
    ConfigError,
    DimOverflow,
    ParseError,
    TruncatedFile,
    ValidationError,
)
from .sampling import FeatureSequence

MANIFEST_VERSION = 1
FEATURE_MAGIC = b"TCNF"
FEATURE_VERSION = 1
_U32_MAX = 2**32 - 1


@dataclass(frozen=True)
class VideoEntry:
    num_frames: int
    fps: float
    annotations: tuple[tuple[TemporalInterval, int], ...]


@dataclass(frozen=True)
class DatasetManifest:
    label_names: tuple[str, ...]
    videos: dict[str, VideoEntry]

    def class_id(self, label: str) -> int:
        return self.label_names.index(label) + 1

    def annotations_by_video(self) -> dict[str, GroundTruthAnnotation]:
        return {
            video_id: GroundTruthAnnotation(video_id=video_id, intervals=entry.annotations)
            for video_id, entry in self.videos.items()
        }


def _segment_to_frames(segment, unit: str, fps: float) -> tuple[int, int]:
    if unit == "frames":
        return int(segment[0]), int(segment[1])
    return round(segment[0] * fps), round(segment[1] * fps)


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a manifest file.

    Structural problems (bad JSON, missing or mistyped fields) raise
    ParseError naming the offending field; semantic problems raise a single
    ValidationError whose message lists every violation found.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from err

    def require(mapping, key, kind, where):
        if key not in mapping:
            raise ParseError(f"{path}: {where}: missing field {key!r}")
        value = mapping[key]
        if not isinstance(value, kind):
            raise ParseError(f"{path}: {where}: field {key!r} must be {kind.__name__}")
        return value

    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be an object")
    version = require(raw, "version", int, "top level")
    if version != MANIFEST_VERSION:
        raise ParseError(f"{path}: unsupported manifest version {version}")
    label_names = require(raw, "label_names", list, "top level")
    videos_raw = require(raw, "videos", dict, "top level")

    violations = []
    if not label_names:
        violations.append("label_names is empty")
    if len(set(label_names)) != len(label_names):
        violations.append("label_names contains duplicates")
    for name in label_names:
        if not isinstance(name, str) or not name:
            violations.append(f"label name {name!r} is not a non-empty string")

    videos: dict[str, VideoEntry] = {}
    for video_id, entry in videos_raw.items():
        where = f"videos[{video_id!r}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{path}: {where}: must be an object")
        num_frames = require(entry, "num_frames", int, where)
        fps = require(entry, "fps", (int, float), where)
        annotations_raw = require(entry, "annotations", list, where)
        if num_frames < 1:
            violations.append(f"{where}: num_frames must be >= 1, got {num_frames}")
        if fps <= 0:
            violations.append(f"{where}: fps must be > 0, got {fps}")
        annotations = []
        for i, ann in enumerate(annotations_raw):
            ann_where = f"{where}.annotations[{i}]"
            if not isinstance(ann, dict):
                raise ParseError(f"{path}: {ann_where}: must be an object")
            segment = require(ann, "segment", list, ann_where)
            unit = ann.get("unit", "seconds")
            label = require(ann, "label", str, ann_where)
            if unit not in ("seconds", "frames"):
                raise ParseError(f"{path}: {ann_where}: unit must be 'seconds' or 'frames'")
            if len(segment) != 2 or not all(isinstance(v, (int, float)) for v in segment):
                raise ParseError(f"{path}: {ann_where}: segment must be a [begin, end] number pair")
            if label not in label_names:
                violations.append(f"{ann_where}: unknown label {label!r}")
                continue
            begin, end = _segment_to_frames(segment, unit, float(fps))
            if end <= begin:
                violations.append(f"{ann_where}: segment degenerates to [{begin}, {end}) frames")
                continue
            if begin < 0 or end > num_frames:
                violations.append(f"{ann_where}: frames [{begin}, {end}) outside [0, {num_frames})")
                continue
            annotations.append((TemporalInterval(begin, end), label_names.index(label) + 1))
        videos[video_id] = VideoEntry(num_frames=num_frames, fps=float(fps), annotations=tuple(annotations))

    if violations:
        raise ValidationError(f"{path}: " + "; ".join(violations))
    return DatasetManifest(label_names=tuple(label_names), videos=videos)


def save_manifest(path, manifest: DatasetManifest):
    """Write a manifest; segments are emitted in frames (the canonical unit)."""
    raw = {
        "version": MANIFEST_VERSION,
        "label_names": list(manifest.label_names),
        "videos": {
            video_id: {
                "num_frames": entry.num_frames,
                "fps": entry.fps,
                "annotations": [
                    {
                        "segment": [interval.begin, interval.end],
                        "unit": "frames",
                        "label": manifest.label_names[class_id - 1],
                    }
                    for interval, class_id in entry.annotations
                ],
            }
            for video_id, entry in manifest.videos.items()
        },
    }
    Path(path).write_text(json.dumps(raw, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_features(path, fs: FeatureSequence):
    """Persist a feature sequence; values are stored as little-endian float32."""
    num_frames, dim = fs.values.shape
    if num_frames > _U32_MAX or dim > _U32_MAX:
        raise DimOverflow(f"dimensions ({num_frames}, {dim}) exceed the u32 header fields")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, num_frames, dim))
        fh.write(np.ascontiguousarray(fs.values, dtype="<f4").tobytes())


def read_features(path, video_id: str | None = None) -> FeatureSequence:
    """Read a feature file back, bit-exact; video id defaults to the file stem."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != FEATURE_MAGIC:
        raise BadMagic(f"{path}: expected magic {FEATURE_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 16:
        raise TruncatedFile(f"{path}: header needs 16 bytes, file has {len(data)}")
    version, num_frames, dim = struct.unpack("<III", data[4:16])
    if version != FEATURE_VERSION:
        raise BadMagic(f"{path}: unsupported feature-file version {version}")
    expected = 16 + 4 * num_frames * dim
    if len(data) < expected:
        raise TruncatedFile(f"{path}: header promises {expected} bytes, file has {len(data)}")
    if len(data) > expected:
        raise ParseError(f"{path}: {len(data) - expected} trailing bytes after payload")
    values = np.frombuffer(data, dtype="<f4", count=num_frames * dim, offset=16).reshape(num_frames, dim)
    return FeatureSequence(video_id=video_id or path.stem, values=values.copy())


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the planted-activity generator.

    Feature channels: 0..num_classes-1 carry the per-class activity signal,
    channel num_classes carries the boundary transient, anything above is
    pure noise. Activities keep ``edge_margin`` frames from the video ends
    and ``min_gap`` frames from each other so boundary transients never
    collide.
    """

    num_videos: int = 200
    min_frames: int = 192
    max_frames: int = 320
    dim: int = 8
    num_classes: int = 5
    min_activities: int = 1
    max_activities: int = 2
    # durations past 72 keep every well-aligned 64-frame anchor strictly inside
    # its activity, so proposal-interval features alone cannot separate aligned
    # anchors from nested ones
    min_duration: int = 72
    max_duration: int = 88
    snr: float = 2.5
    boundary_signal: bool = True
    seed: int = 0
    edge_margin: int = 4
    min_gap: int = 8

    def __post_init__(self):
        if self.num_videos < 1:
            raise ConfigError("num_videos must be >= 1")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ConfigError("need 1 <= min_frames <= max_frames")
        if self.dim < self.num_classes + 2:
            raise ConfigError("dim must be >= num_classes + 2 (class channels, transient channel, noise headroom)")
        if not 0 <= self.min_activities <= self.max_activities:
            raise ConfigError("need 0 <= min_activities <= max_activities")
        if not 1 <= self.min_duration <= self.max_duration:
            raise ConfigError("need 1 <= min_duration <= max_duration")
        if self.snr < 0:
            raise ConfigError("snr must be >= 0")
        if self.min_activities > 0 and self.min_duration + 2 * self.edge_margin > self.min_frames:
            raise ConfigError("shortest video cannot fit one activity inside the edge margins")


def _place_activities(num_frames: int, cfg: SynthConfig, rng: np.random.Generator):
    """Non-overlapping intervals inside the margins; drops surplus when space runs out."""
    count = int(rng.integers(cfg.min_activities, cfg.max_activities + 1))
    intervals = []
    cursor = cfg.edge_margin
    for i in range(count):
        duration = int(rng.integers(cfg.min_duration, cfg.max_duration + 1))
        remaining_min = (count - i - 1) * (cfg.min_duration + cfg.min_gap)
        latest_begin = num_frames - cfg.edge_margin - duration - remaining_min
        if latest_begin < cursor:
            break
        begin = int(rng.integers(cursor, latest_begin + 1))
        intervals.append(TemporalInterval(begin, begin + duration))
        cursor = begin + duration + cfg.min_gap
    return intervals


def generate_synthetic(cfg: SynthConfig):
    """Build (manifest, features-by-video) for the planted-activity benchmark.

    Byte-deterministic under ``cfg.seed``. Every generated annotation lies
    inside its video and round-trips through manifest validation.
    """
    rng = np.random.default_rng(cfg.seed)
    width = max(3, len(str(cfg.num_videos - 1)))
    label_names = tuple(f"class_{c:02d}" for c in range(1, cfg.num_classes + 1))
    videos: dict[str, VideoEntry] = {}
    features: dict[str, FeatureSequence] = {}
    for v in range(cfg.num_videos):
        video_id = f"vid_{v:0{width}d}"
        num_frames = int(rng.integers(cfg.min_frames, cfg.max_frames + 1))
        values = rng.standard_normal((num_frames, cfg.dim))
        annotations = []
        for interval in _place_activities(num_frames, cfg, rng):
            class_id = int(rng.integers(1, cfg.num_classes + 1))
            values[interval.begin : interval.end, class_id - 1] += cfg.snr
            if cfg.boundary_signal:
                for edge in (interval.begin, interval.end):
                    for frame in (edge - 1, edge):
                        if 0 <= frame < num_frames:
                            values[frame, cfg.num_classes] += cfg.snr
            annotations.append((interval, class_id))
        videos[video_id] = VideoEntry(num_frames=num_frames, fps=1.0, annotations=tuple(annotations))
        features[video_id] = FeatureSequence(video_id=video_id, values=values)
    return DatasetManifest(label_names=label_names, videos=videos), features


def write_dataset(out_dir, manifest: DatasetManifest, features: dict[str, FeatureSequence]):
    """Lay out manifest.json plus features/<video_id>.tcnf under ``out_dir``."""
    out_dir = Path(out_dir)
    feature_dir = out_dir / "features"
    feature_dir.mkdir(parents=True, exist_ok=True)
    save_manifest(out_dir / "manifest.json", manifest)
    for video_id, fs in features.items():
        write_features(feature_dir / f"{video_id}.tcnf", fs)


def load_dataset(manifest_path, feature_dir):
    """Read (FeatureSequence, GroundTruthAnnotation) pairs for every manifest video."""
    manifest = load_manifest(manifest_path)
    annotations = manifest.annotations_by_video()
    feature_dir = Path(feature_dir)
    dataset = []
    for video_id in manifest.videos:
        fs = read_features(feature_dir / f"{video_id}.tcnf", video_id=video_id)
        declared = manifest.videos[video_id].num_frames
        if fs.num_frames != declared:
            raise ValidationError(
                f"{video_id}: manifest says {declared} frames, feature file has {fs.num_frames}"
            )
        dataset.append((fs, annotations[video_id]))
    return manifest, dataset
