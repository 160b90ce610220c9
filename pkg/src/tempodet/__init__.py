"""Temporal activity localization on per-frame feature sequences."""

from .anchors import AnchorConfig, Proposal, generate_anchors, pyramid_coverage_recall
from .classifier import (
    ClassifierConfig,
    ClassifierModel,
    assign_class_label,
    bilinear_pool,
    classify,
    signed_sqrt_l2,
    train_classifier,
)
from .core import Detection, GroundTruthAnnotation, TemporalInterval, clamp_to_video, iou
from .data_io import (
    DatasetManifest,
    SynthConfig,
    generate_synthetic,
    load_dataset,
    load_manifest,
    read_features,
    save_manifest,
    write_dataset,
    write_features,
)
from .detect import DetectConfig, DetectionModels, detect, nms, read_detections, write_detections
from .metrics import (
    APResult,
    RecallCurve,
    average_recall,
    mean_average_precision,
    recall_at_k,
    recall_vs_iou_curve,
)
from .ranker import (
    RankerConfig,
    RankerModel,
    RankLabel,
    assign_rank_label,
    make_batch,
    rank_proposals,
    ranker_forward,
    train_ranker,
)
from .sampling import (
    ContextPair,
    FeatureSequence,
    SampledFeatures,
    build_context_pair,
    context_interval,
    sample_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorConfig",
    "APResult",
    "ClassifierConfig",
    "ClassifierModel",
    "ContextPair",
    "DatasetManifest",
    "DetectConfig",
    "Detection",
    "DetectionModels",
    "FeatureSequence",
    "GroundTruthAnnotation",
    "Proposal",
    "RankLabel",
    "RankerConfig",
    "RankerModel",
    "RecallCurve",
    "SampledFeatures",
    "SynthConfig",
    "TemporalInterval",
    "assign_class_label",
    "assign_rank_label",
    "average_recall",
    "bilinear_pool",
    "build_context_pair",
    "clamp_to_video",
    "classify",
    "context_interval",
    "detect",
    "generate_anchors",
    "generate_synthetic",
    "iou",
    "load_dataset",
    "load_manifest",
    "make_batch",
    "mean_average_precision",
    "nms",
    "pyramid_coverage_recall",
    "rank_proposals",
    "ranker_forward",
    "read_detections",
    "read_features",
    "recall_at_k",
    "recall_vs_iou_curve",
    "sample_uniform",
    "save_manifest",
    "signed_sqrt_l2",
    "train_classifier",
    "train_ranker",
    "write_dataset",
    "write_detections",
    "write_features",
]
