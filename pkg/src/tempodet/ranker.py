"""Foreground/background proposal ranking over context pairs.

Each candidate is represented by two fixed-size feature samples (proposal
interval and same-center context window). Each sample runs through its own
temporal-convolution tower (conv k=5 s=1, ReLU, average pool 3 s=1), the two
tower outputs are concatenated and mapped through a hidden fully connected
layer to a two-way softmax. Labels come from overlap with ground truth:
above ``iou_pos`` is positive, below ``iou_neg`` negative, the band between
is ignored and never enters a training batch.
"""

from dataclasses import dataclass, field, replace
import enum

import numpy as np

from . import nn
from .anchors import AnchorConfig, Proposal, generate_anchors
from .core import GroundTruthAnnotation, iou
from .errors import InvalidConfig, NoNegatives, NoPositives, ShapeError
from .sampling import ContextPair, FeatureSequence, build_context_pair


class RankLabel(enum.Enum):
    POSITIVE = 1
    NEGATIVE = 0
    IGNORE = -1


@dataclass(frozen=True)
class RankerConfig:
    """Ranker architecture, labeling thresholds, and batch recipe."""

    dim: int
    samples: int = 16
    conv_channels: int = 64
    hidden: int = 500
    scale_factor: float = 2.0
    iou_pos: float = 0.7
    iou_neg: float = 0.3
    batch_size: int = 1024
    pos_frac: float = 0.5
    share_conv: bool = False
    relu_after_hidden: bool = True
    optimizer: nn.OptimizerConfig = field(default_factory=lambda: nn.OptimizerConfig(learning_rate=0.1))

    def __post_init__(self):
        if self.iou_neg >= self.iou_pos:
            raise InvalidConfig("iou_neg must be < iou_pos")
        if self.samples < 7:
            raise InvalidConfig("samples must be >= 7 so conv (k=5) + pool (3) leave a time axis")
        if not 0 < self.pos_frac < 1:
            raise InvalidConfig("pos_frac must be in (0, 1)")

    @property
    def tower_out(self) -> int:
        # conv then pool maps samples -> samples - 6
        return (self.samples - 6) * self.conv_channels


def assign_rank_label(p: Proposal, gt: GroundTruthAnnotation, iou_pos: float = 0.7, iou_neg: float = 0.3) -> RankLabel:
    """Positive above iou_pos, negative below iou_neg (no ground truth counts
    as overlap 0), ignore in the closed band between."""
    best = max((iou(p.interval, g) for g, _ in gt.intervals), default=0.0)
    if best > iou_pos:
        return RankLabel.POSITIVE
    if best < iou_neg:
        return RankLabel.NEGATIVE
    return RankLabel.IGNORE


def _pick(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    # without replacement when plentiful, with replacement when scarce
    replace_draws = len(pool) < count
    return rng.choice(pool, size=count, replace=replace_draws)


def select_batch_indices(labels: np.ndarray, cfg: RankerConfig, rng: np.random.Generator):
    """Pick batch_size candidate indices at the configured positive fraction.

    ``labels`` holds RankLabel values per candidate; ignored candidates are
    never selected. Returns (indices, binary labels) in shuffled order.
    """
    pos_pool = np.flatnonzero(labels == RankLabel.POSITIVE.value)
    neg_pool = np.flatnonzero(labels == RankLabel.NEGATIVE.value)
    if len(pos_pool) == 0:
        raise NoPositives("no positive candidates available for batch assembly")
    if len(neg_pool) == 0:
        raise NoNegatives("no negative candidates available for batch assembly")
    num_pos = round(cfg.batch_size * cfg.pos_frac)
    picked = np.concatenate([_pick(pos_pool, num_pos, rng), _pick(neg_pool, cfg.batch_size - num_pos, rng)])
    targets = np.concatenate([np.ones(num_pos, dtype=np.int64), np.zeros(cfg.batch_size - num_pos, dtype=np.int64)])
    order = rng.permutation(cfg.batch_size)
    return picked[order], targets[order]


def make_batch(candidates, cfg: RankerConfig, seed: int):
    """Assemble one training batch of (ContextPair, {0,1}) from labeled candidates.

    ``candidates`` is a sequence of (ContextPair, RankLabel); positives and
    negatives are drawn at ``pos_frac`` (with replacement when a polarity is
    scarce), deterministically under ``seed``.
    """
    labels = np.array([label.value for _, label in candidates], dtype=np.int64)
    idx, targets = select_batch_indices(labels, cfg, np.random.default_rng(seed))
    return [(candidates[i][0], int(t)) for i, t in zip(idx, targets)]


class RankerModel:
    """Two conv towers, concatenation, hidden FC, and two-way softmax head."""

    def __init__(self, cfg: RankerConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.conv_inner = nn.TemporalConv(cfg.dim, cfg.conv_channels, rng=rng)
        self.conv_outer = self.conv_inner if cfg.share_conv else nn.TemporalConv(cfg.dim, cfg.conv_channels, rng=rng)
        self.fc_hidden = nn.Linear(2 * cfg.tower_out, cfg.hidden, rng=rng)
        self.fc_out = nn.Linear(cfg.hidden, 2, rng=rng)
        self._towers = {
            "inner": (self.conv_inner, nn.ReLU(), nn.AvgPool(3), nn.Flatten()),
            "outer": (self.conv_outer, nn.ReLU(), nn.AvgPool(3), nn.Flatten()),
        }
        self._hidden_relu = nn.ReLU()
        self._loss = nn.SoftmaxCrossEntropy()
        self.history: list[dict] = []
        for prefix, layer in (("conv_inner", self.conv_inner), ("conv_outer", self.conv_outer),
                              ("fc_hidden", self.fc_hidden), ("fc_out", self.fc_out)):
            for p in layer.params():
                p.name = f"{prefix}.{p.name.split('.')[-1]}"

    def params(self):
        out = self.conv_inner.params()
        if not self.cfg.share_conv:
            out = out + self.conv_outer.params()
        return out + self.fc_hidden.params() + self.fc_out.params()

    def _tower_forward(self, name, x):
        conv, relu, pool, flat = self._towers[name]
        return flat.forward(pool.forward(relu.forward(conv.forward(x))))

    def _tower_backward(self, name, grad):
        conv, relu, pool, flat = self._towers[name]
        return conv.backward(relu.backward(pool.backward(flat.backward(grad))))

    def forward(self, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
        """Logits (B, 2) for batched pairs of shape (B, samples, dim)."""
        if inner.shape != outer.shape:
            raise ShapeError(f"inner/outer shapes differ: {inner.shape} vs {outer.shape}")
        feats = np.concatenate([self._tower_forward("inner", inner), self._tower_forward("outer", outer)], axis=1)
        hidden = self.fc_hidden.forward(feats)
        if self.cfg.relu_after_hidden:
            hidden = self._hidden_relu.forward(hidden)
        return self.fc_out.forward(hidden)

    def train_step(self, inner, outer, targets, optimizer: nn.OptimizerConfig):
        """One forward/backward/update pass; returns (loss, batch accuracy)."""
        logits = self.forward(inner, outer)
        loss, probs = self._loss.forward(logits, targets)
        nn.zero_grads(self.params())
        grad = self._loss.backward()
        grad = self.fc_out.backward(grad)
        if self.cfg.relu_after_hidden:
            grad = self._hidden_relu.backward(grad)
        grad = self.fc_hidden.backward(grad)
        half = self.cfg.tower_out
        # reverse of forward order so a shared conv pops its caches LIFO
        self._tower_backward("outer", grad[:, half:])
        self._tower_backward("inner", grad[:, :half])
        nn.sgd_step(self.params(), optimizer)
        accuracy = float((probs.argmax(axis=1) == targets).mean())
        return loss, accuracy

    def score(self, inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
        """Foreground probabilities in (0, 1) for batched pairs."""
        return nn.softmax(self.forward(inner, outer))[:, 1]

    def save(self, path):
        nn.save_params(path, self.params())

    def load(self, path):
        nn.load_params(path, self.params())


def ranker_forward(pair: ContextPair, model: RankerModel) -> float:
    """Foreground probability for a single context pair."""
    return float(model.score(pair.inner.values[None], pair.outer.values[None])[0])


def _stack_pairs(fs: FeatureSequence, proposals, cfg: RankerConfig):
    inner = np.empty((len(proposals), cfg.samples, fs.dim))
    outer = np.empty_like(inner)
    for row, p in enumerate(proposals):
        pair = build_context_pair(fs, p, cfg.samples, cfg.scale_factor)
        inner[row] = pair.inner.values
        outer[row] = pair.outer.values
    return inner, outer


def build_labeled_candidates(dataset, anchor_cfg: AnchorConfig, cfg: RankerConfig):
    """Precompute (inner, outer, label) arrays over every video's anchor pyramid.

    ``dataset`` is a sequence of (FeatureSequence, GroundTruthAnnotation).
    Returns float64 arrays (N, samples, dim) x2 and an int label array using
    RankLabel values.
    """
    inner_parts, outer_parts, label_parts = [], [], []
    for fs, gt in dataset:
        anchors = generate_anchors(anchor_cfg, fs.num_frames)
        inner, outer = _stack_pairs(fs, anchors, cfg)
        labels = np.array(
            [assign_rank_label(p, gt, cfg.iou_pos, cfg.iou_neg).value for p in anchors], dtype=np.int64
        )
        inner_parts.append(inner)
        outer_parts.append(outer)
        label_parts.append(labels)
    return np.concatenate(inner_parts), np.concatenate(outer_parts), np.concatenate(label_parts)


def train_ranker(
    dataset,
    cfg: RankerConfig,
    iterations: int,
    seed: int,
    anchor_cfg: AnchorConfig | None = None,
) -> RankerModel:
    """Train a ranker on (FeatureSequence, GroundTruthAnnotation) pairs.

    Runs ``iterations`` minibatch steps of momentum SGD on batches assembled
    at the configured positive fraction. Deterministic under ``seed``; zero
    iterations returns the freshly initialized model. Per-iteration loss and
    batch accuracy are recorded on ``model.history``.
    """
    anchor_cfg = anchor_cfg if anchor_cfg is not None else AnchorConfig()
    rng = np.random.default_rng(seed)
    init_rng, batch_rng = rng.spawn(2)
    model = RankerModel(cfg, rng=init_rng)
    if iterations == 0:
        return model
    inner, outer, labels = build_labeled_candidates(dataset, anchor_cfg, cfg)
    for _ in range(iterations):
        idx, targets = select_batch_indices(labels, cfg, batch_rng)
        loss, accuracy = model.train_step(inner[idx], outer[idx], targets, cfg.optimizer)
        model.history.append({"loss": loss, "accuracy": accuracy})
    return model


def rank_proposals(
    fs: FeatureSequence,
    anchors,
    model: RankerModel,
    cfg: RankerConfig,
    chunk_size: int = 4096,
) -> list[Proposal]:
    """Score every anchor and return proposals sorted by descending score.

    Ties break deterministically by earlier begin frame, then smaller scale.
    """
    anchors = list(anchors)
    if not anchors:
        return []
    scores = np.empty(len(anchors))
    for start in range(0, len(anchors), chunk_size):
        batch = anchors[start : start + chunk_size]
        inner, outer = _stack_pairs(fs, batch, cfg)
        scores[start : start + len(batch)] = model.score(inner, outer)
    scored = [replace(p, score=float(s)) for p, s in zip(anchors, scores)]
    scored.sort(key=lambda p: (-p.score, p.interval.begin, p.scale_index))
    return scored
