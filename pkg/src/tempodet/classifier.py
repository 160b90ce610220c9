"""Segment classification via bilinear pooling of in-segment features.

A segment is summarized by the sum of outer products of every feature row
inside it (no temporal sampling), vectorized row-major, passed through
signed square root and l2 normalization, and mapped by a single fully
connected layer to a (num_classes + 1)-way softmax where class 0 is
background. Training labels mirror the ranker's thresholds, except a
positive takes the dominant ground-truth class inside the proposal.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .anchors import AnchorConfig, Proposal, generate_anchors
from .core import GroundTruthAnnotation, clamp_to_video, iou
from .errors import EmptyAfterClamp, EmptySegment, InvalidConfig, NoBackground, NoForeground
from .sampling import FeatureSequence


@dataclass(frozen=True)
class ClassifierConfig:
    """Feature dimension, class count, labeling thresholds, and batch recipe."""

    dim: int
    num_classes: int
    iou_pos: float = 0.7
    iou_neg: float = 0.3
    batch_size: int = 1024
    bg_per_batch: int = 64
    optimizer: nn.OptimizerConfig = field(default_factory=lambda: nn.OptimizerConfig(learning_rate=0.001))

    def __post_init__(self):
        if self.num_classes < 1:
            raise InvalidConfig("num_classes must be >= 1")
        if not 0 < self.bg_per_batch <= self.batch_size:
            raise InvalidConfig("bg_per_batch must be in (0, batch_size]")


def bilinear_pool(segment_features: np.ndarray) -> np.ndarray:
    """Sum of row outer products Z^T Z, vectorized row-major to length D*D.

    ``segment_features`` holds every feature row inside the segment, shape
    (l, D) with l >= 1.
    """
    z = np.asarray(segment_features, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise EmptySegment(f"need an (l >= 1, D) feature matrix, got shape {z.shape}")
    return (z.T @ z).reshape(-1)


def signed_sqrt_l2(x: np.ndarray) -> np.ndarray:
    """Element-wise sign(x) * sqrt(|x|), then scaled to unit l2 norm.

    An all-zero input (a fully padded segment) maps to all zeros instead of
    dividing by zero.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.sign(x) * np.sqrt(np.abs(x))
    norm = np.linalg.norm(y)
    if norm == 0.0:
        return y
    return y / norm


def assign_class_label(
    p: Proposal,
    gt: GroundTruthAnnotation,
    iou_pos: float = 0.7,
    iou_neg: float = 0.3,
) -> int | None:
    """Dominant class id above iou_pos, background 0 below iou_neg, None (ignore) between.

    Dominance is total intersection length in frames with the proposal, over
    all ground-truth intervals of each class; ties pick the smallest class id.
    """
    best = max((iou(p.interval, g) for g, _ in gt.intervals), default=0.0)
    if best < iou_neg:
        return 0
    if best <= iou_pos:
        return None
    overlap_by_class: dict[int, int] = {}
    for g, class_id in gt.intervals:
        inter = p.interval.intersection_length(g)
        if inter > 0:
            overlap_by_class[class_id] = overlap_by_class.get(class_id, 0) + inter
    return min(c for c, v in overlap_by_class.items() if v == max(overlap_by_class.values()))


class ClassifierModel:
    """Single FC layer over normalized bilinear features, (num_classes+1)-way softmax."""

    def __init__(self, cfg: ClassifierConfig, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.fc = nn.Linear(cfg.dim * cfg.dim, cfg.num_classes + 1, rng=rng)
        self._loss = nn.SoftmaxCrossEntropy()
        self.history: list[dict] = []
        for p in self.fc.params():
            p.name = f"classifier.{p.name.split('.')[-1]}"

    def params(self):
        return self.fc.params()

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Class probabilities (B, num_classes + 1) from normalized bilinear rows."""
        return nn.softmax(self.fc.forward(features))

    def train_step(self, features, targets, optimizer: nn.OptimizerConfig):
        logits = self.fc.forward(features)
        loss, probs = self._loss.forward(logits, targets)
        nn.zero_grads(self.params())
        self.fc.backward(self._loss.backward())
        nn.sgd_step(self.params(), optimizer)
        accuracy = float((probs.argmax(axis=1) == targets).mean())
        return loss, accuracy

    def save(self, path):
        nn.save_params(path, self.params())

    def load(self, path):
        nn.load_params(path, self.params())


def segment_descriptor(fs: FeatureSequence, p: Proposal) -> np.ndarray:
    """Normalized bilinear vector of the proposal's in-video frames.

    Raises EmptySegment when the proposal lies entirely outside the video.
    """
    try:
        clamped = clamp_to_video(p.interval, fs.num_frames)
    except EmptyAfterClamp as err:
        raise EmptySegment(str(err)) from err
    z = fs.values[clamped.begin : clamped.end].astype(np.float64)
    return signed_sqrt_l2(bilinear_pool(z))


def classify(fs: FeatureSequence, p: Proposal, model: ClassifierModel) -> np.ndarray:
    """Probability vector over num_classes + 1 labels for one proposal."""
    return model.forward(segment_descriptor(fs, p)[None])[0]


def select_batch_indices(labels: np.ndarray, cfg: ClassifierConfig, rng: np.random.Generator):
    """Pick batch_size indices: exactly bg_per_batch background, rest foreground.

    ``labels`` holds class ids with -1 for ignored candidates. Sampling is
    without replacement when a side has enough candidates, with replacement
    otherwise. Returns (indices, class targets) in shuffled order.
    """
    bg_pool = np.flatnonzero(labels == 0)
    fg_pool = np.flatnonzero(labels > 0)
    if len(bg_pool) == 0:
        raise NoBackground("no background candidates available for batch assembly")
    if len(fg_pool) == 0:
        raise NoForeground("no foreground candidates available for batch assembly")

    def pick(pool, count):
        return rng.choice(pool, size=count, replace=len(pool) < count)

    idx = np.concatenate([pick(bg_pool, cfg.bg_per_batch), pick(fg_pool, cfg.batch_size - cfg.bg_per_batch)])
    order = rng.permutation(cfg.batch_size)
    idx = idx[order]
    return idx, labels[idx]


def build_labeled_candidates(dataset, anchor_cfg: AnchorConfig, cfg: ClassifierConfig):
    """Normalized bilinear descriptors and class labels over every anchor pyramid.

    Returns (features (N, D*D), labels (N,)) with -1 marking ignored anchors.
    """
    feats, labels = [], []
    for fs, gt in dataset:
        for p in generate_anchors(anchor_cfg, fs.num_frames):
            label = assign_class_label(p, gt, cfg.iou_pos, cfg.iou_neg)
            feats.append(segment_descriptor(fs, p))
            labels.append(-1 if label is None else label)
    return np.stack(feats), np.array(labels, dtype=np.int64)


def train_classifier(
    dataset,
    cfg: ClassifierConfig,
    iterations: int,
    seed: int,
    anchor_cfg: AnchorConfig | None = None,
) -> ClassifierModel:
    """Train the segment classifier; deterministic under ``seed``.

    Each of the ``iterations`` batches holds exactly ``bg_per_batch``
    background samples, the remainder foreground. Per-iteration loss and
    batch accuracy land on ``model.history``.
    """
    anchor_cfg = anchor_cfg if anchor_cfg is not None else AnchorConfig()
    init_rng, batch_rng = np.random.default_rng(seed).spawn(2)
    model = ClassifierModel(cfg, rng=init_rng)
    if iterations == 0:
        return model
    feats, labels = build_labeled_candidates(dataset, anchor_cfg, cfg)
    for _ in range(iterations):
        idx, targets = select_batch_indices(labels, cfg, batch_rng)
        loss, accuracy = model.train_step(feats[idx], targets, cfg.optimizer)
        model.history.append({"loss": loss, "accuracy": accuracy})
    return model
