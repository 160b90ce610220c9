"""End-to-end detection: anchors -> rank -> NMS -> top-K -> classify.

Detections are persisted as line-delimited JSON, one object per line with
the fixed key order ``video_id, begin, end, class_id, class_name, score`` so
output files diff cleanly.
"""

from dataclasses import dataclass
import json

import numpy as np

from .anchors import AnchorConfig, Proposal, generate_anchors
from .classifier import ClassifierConfig, ClassifierModel, classify
from .core import Detection, TemporalInterval, iou
from .errors import InvalidConfig, ParseError
from .ranker import RankerConfig, RankerModel, rank_proposals
from .sampling import FeatureSequence


@dataclass(frozen=True)
class DetectConfig:
    top_k: int = 20
    nms_threshold: float = 0.45
    score_combination: str = "classifier_only"
    nms_before_classify: bool = True

    def __post_init__(self):
        if self.top_k < 1:
            raise InvalidConfig("top_k must be >= 1")
        if not 0 < self.nms_threshold < 1:
            raise InvalidConfig("nms_threshold must be in (0, 1)")
        if self.score_combination not in ("classifier_only", "product"):
            raise InvalidConfig(f"unknown score_combination {self.score_combination!r}")


@dataclass(frozen=True)
class DetectionModels:
    """Frozen models plus the configs needed to rerun them at inference."""

    ranker: RankerModel
    ranker_cfg: RankerConfig
    classifier: ClassifierModel
    classifier_cfg: ClassifierConfig
    anchor_cfg: AnchorConfig


def nms(proposals: list[Proposal], threshold: float) -> list[Proposal]:
    """Greedy suppression over score-sorted proposals.

    Keeps the best remaining proposal and discards every remaining one whose
    overlap with it exceeds ``threshold``. Input order is trusted, so the
    result is stable under the ranker's tie-breaking.
    """
    if len(proposals) <= 1:
        return list(proposals)
    begins = np.array([p.interval.begin for p in proposals], dtype=np.float64)
    ends = np.array([p.interval.end for p in proposals], dtype=np.float64)
    lengths = ends - begins
    alive = np.ones(len(proposals), dtype=bool)
    kept = []
    while alive.any():
        i = int(np.flatnonzero(alive)[0])
        kept.append(proposals[i])
        alive[i] = False
        inter = np.clip(np.minimum(ends, ends[i]) - np.maximum(begins, begins[i]), 0.0, None)
        overlap = inter / (lengths + lengths[i] - inter)
        alive &= overlap <= threshold
    return kept


def _nms_detections(detections: list[Detection], threshold: float) -> list[Detection]:
    ordered = sorted(detections, key=lambda d: (-d.score, d.interval.begin, d.class_id))
    kept: list[Detection] = []
    for d in ordered:
        if all(iou(d.interval, k.interval) <= threshold for k in kept):
            kept.append(d)
    return kept


def detect(
    fs: FeatureSequence,
    models: DetectionModels,
    cfg: DetectConfig,
    anchors: list[Proposal] | None = None,
) -> list[Detection]:
    """Run the full pipeline on one video.

    Anchors are ranked, filtered by NMS, truncated to ``top_k``, and each
    survivor is classified; survivors whose best class is background emit
    nothing. With ``score_combination="product"`` the detection score is the
    classifier probability times the proposal score. Setting
    ``nms_before_classify=False`` instead truncates first and suppresses the
    classified detections at the end.
    """
    if anchors is None:
        anchors = generate_anchors(models.anchor_cfg, fs.num_frames)
    if not anchors:
        return []
    ranked = rank_proposals(fs, anchors, models.ranker, models.ranker_cfg)
    if cfg.nms_before_classify:
        survivors = nms(ranked, cfg.nms_threshold)[: cfg.top_k]
    else:
        survivors = ranked[: cfg.top_k]
    detections = []
    for p in survivors:
        probs = classify(fs, p, models.classifier)
        class_id = int(np.argmax(probs))
        if class_id == 0:
            continue
        score = float(probs[class_id])
        if cfg.score_combination == "product":
            score *= p.score
        detections.append(Detection(fs.video_id, p.interval, class_id, score))
    if not cfg.nms_before_classify:
        detections = _nms_detections(detections, cfg.nms_threshold)
    return detections


def write_detections(path, detections: list[Detection], label_names=None):
    """One JSON object per line, fixed key order, sorted by (video, score desc)."""
    ordered = sorted(detections, key=lambda d: (d.video_id, -d.score, d.interval.begin, d.class_id))
    with open(path, "w", encoding="utf-8") as fh:
        for d in ordered:
            name = label_names[d.class_id - 1] if label_names else str(d.class_id)
            record = {
                "video_id": d.video_id,
                "begin": d.interval.begin,
                "end": d.interval.end,
                "class_id": d.class_id,
                "class_name": name,
                "score": d.score,
            }
            fh.write(json.dumps(record) + "\n")


def read_detections(path) -> list[Detection]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(
                    Detection(
                        video_id=rec["video_id"],
                        interval=TemporalInterval(rec["begin"], rec["end"]),
                        class_id=rec["class_id"],
                        score=rec["score"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ParseError(f"{path}:{lineno}: bad detection record: {err}") from err
    return out


def write_proposals(path, proposals_by_video: dict[str, list[Proposal]]):
    """Ranked proposals as JSON lines, videos sorted by id, proposals in rank order."""
    with open(path, "w", encoding="utf-8") as fh:
        for video_id in sorted(proposals_by_video):
            for p in proposals_by_video[video_id]:
                record = {
                    "video_id": video_id,
                    "begin": p.interval.begin,
                    "end": p.interval.end,
                    "position": p.position_index,
                    "scale": p.scale_index,
                    "score": p.score,
                }
                fh.write(json.dumps(record) + "\n")


def read_proposals(path) -> dict[str, list[Proposal]]:
    out: dict[str, list[Proposal]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                proposal = Proposal(
                    interval=TemporalInterval(rec["begin"], rec["end"]),
                    position_index=rec["position"],
                    scale_index=rec["scale"],
                    score=rec["score"],
                )
                out.setdefault(rec["video_id"], []).append(proposal)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                raise ParseError(f"{path}:{lineno}: bad proposal record: {err}") from err
    return out
