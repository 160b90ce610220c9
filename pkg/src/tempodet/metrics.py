"""Proposal and detection metrics: recall curves, average recall, and mAP.

Proposal metrics measure coverage: a ground-truth interval counts as
recalled when any of its video's top-k proposals overlaps it at or above the
threshold, and one proposal may cover several ground truths. Detection mAP
uses the standard protocol instead: detections are matched greedily by
descending score, each ground truth can be claimed once, and average
precision is the area under the monotone precision envelope over recall.

Curve exports are two-column ``x y`` text files; scalar summaries are JSON.
"""

from dataclasses import dataclass
import json

import numpy as np

from .anchors import Proposal
from .core import Detection, GroundTruthAnnotation, iou
from .errors import NoGroundTruth

DEFAULT_IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class RecallCurve:
    iou_grid: tuple[float, ...]
    recall: tuple[float, ...]
    proposals_per_video: int


@dataclass(frozen=True)
class APResult:
    per_class_ap: dict[int, float]
    map_value: float
    tiou: float


def _total_gt(gt_by_video) -> int:
    return sum(len(gt.intervals) for gt in gt_by_video.values())


def recall_at_k(proposals_by_video, gt_by_video, k: int, iou_threshold: float) -> float:
    """Fraction of ground-truth intervals covered by a top-k proposal of their video.

    ``proposals_by_video`` maps video id to proposals already sorted by
    descending score; ``gt_by_video`` maps video id to annotations.
    """
    total = _total_gt(gt_by_video)
    if total == 0:
        raise NoGroundTruth("recall is undefined without ground-truth intervals")
    if k <= 0:
        return 0.0
    hit = 0
    for video_id, gt in gt_by_video.items():
        top = proposals_by_video.get(video_id, ())[:k]
        for gt_interval, _ in gt.intervals:
            if any(iou(p.interval, gt_interval) >= iou_threshold for p in top):
                hit += 1
    return hit / total


def average_recall(proposals_by_video, gt_by_video, k: int, iou_grid=DEFAULT_IOU_GRID) -> float:
    """Mean of recall_at_k over an overlap-threshold grid (default 0.5 to 0.95 step 0.05)."""
    return float(np.mean([recall_at_k(proposals_by_video, gt_by_video, k, t) for t in iou_grid]))


def recall_vs_iou_curve(proposals_by_video, gt_by_video, k: int, iou_grid=DEFAULT_IOU_GRID) -> RecallCurve:
    recall = tuple(recall_at_k(proposals_by_video, gt_by_video, k, t) for t in iou_grid)
    return RecallCurve(iou_grid=tuple(iou_grid), recall=recall, proposals_per_video=k)


def _envelope_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    # pad so the envelope integrates from recall 0 and closes at recall 1
    mprec = np.concatenate([[0.0], precision, [0.0]])
    mrec = np.concatenate([[0.0], recall, [1.0]])
    for i in range(len(mprec) - 2, -1, -1):
        mprec[i] = max(mprec[i], mprec[i + 1])
    changed = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    return float(np.sum((mrec[changed] - mrec[changed - 1]) * mprec[changed]))


def mean_average_precision(detections: list[Detection], gt_by_video, tiou: float) -> APResult:
    """Per-class AP and their mean at one overlap threshold.

    For each class, detections are sorted by descending score across all
    videos and greedily matched to the highest-overlap unclaimed ground truth
    of that class in the same video (overlap ties prefer the earlier ground
    truth). A match at or above ``tiou`` is a true positive, anything else a
    false positive. Classes present in the ground truth but never detected
    score 0.
    """
    classes = sorted({c for gt in gt_by_video.values() for _, c in gt.intervals})
    if not classes:
        raise NoGroundTruth("mAP is undefined without ground-truth intervals")
    per_class: dict[int, float] = {}
    for c in classes:
        gts = {
            video_id: sorted((g for g, cc in gt.intervals if cc == c), key=lambda g: g.begin)
            for video_id, gt in gt_by_video.items()
        }
        num_positive = sum(len(v) for v in gts.values())
        dets = sorted(
            (d for d in detections if d.class_id == c),
            key=lambda d: (-d.score, d.video_id, d.interval.begin, d.interval.end),
        )
        if not dets:
            per_class[c] = 0.0
            continue
        claimed = {video_id: np.zeros(len(v), dtype=bool) for video_id, v in gts.items()}
        tp = np.zeros(len(dets))
        for i, d in enumerate(dets):
            candidates = gts.get(d.video_id, [])
            best_iou, best_j = 0.0, -1
            for j, g in enumerate(candidates):
                if claimed[d.video_id][j]:
                    continue
                overlap = iou(d.interval, g)
                if overlap > best_iou:
                    best_iou, best_j = overlap, j
            if best_j >= 0 and best_iou >= tiou:
                tp[i] = 1.0
                claimed[d.video_id][best_j] = True
        tp_cum = np.cumsum(tp)
        fp_cum = np.cumsum(1.0 - tp)
        precision = tp_cum / (tp_cum + fp_cum)
        recall = tp_cum / num_positive
        per_class[c] = _envelope_ap(precision, recall)
    return APResult(per_class_ap=per_class, map_value=float(np.mean(list(per_class.values()))), tiou=tiou)


def write_curve(path, xs, ys):
    """Two-column plot data, one ``x y`` pair per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{x:.6g} {y:.6g}\n")


def write_summary(path, values: dict):
    """Scalar metric summary as deterministic, sorted-key JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(values, fh, indent=2, sort_keys=True)
        fh.write("\n")
