import numpy as np
import pytest

from tempodet import nn
from tempodet.anchors import AnchorConfig, Proposal, generate_anchors
from tempodet.core import GroundTruthAnnotation, TemporalInterval
from tempodet.errors import NoNegatives, NoPositives
from tempodet.ranker import (
    RankLabel,
    RankerConfig,
    RankerModel,
    assign_rank_label,
    build_labeled_candidates,
    make_batch,
    rank_proposals,
    ranker_forward,
    train_ranker,
)
from tempodet.sampling import ContextPair, FeatureSequence, SampledFeatures, build_context_pair


def small_cfg(**overrides):
    base = dict(dim=4, samples=16, conv_channels=2, hidden=8, batch_size=32)
    base.update(overrides)
    return RankerConfig(**base)


def make_pair(values_inner, values_outer):
    return ContextPair(SampledFeatures(np.asarray(values_inner, dtype=np.float64)),
                       SampledFeatures(np.asarray(values_outer, dtype=np.float64)))


def random_pair(rng, n=16, dim=4):
    return make_pair(rng.standard_normal((n, dim)), rng.standard_normal((n, dim)))


class TestAssignRankLabel:
    def gt(self, *spans):
        return GroundTruthAnnotation("v", [(TemporalInterval(b, e), 1) for b, e in spans])

    def prop(self, b, e):
        return Proposal(TemporalInterval(b, e), 0, 1)

    def test_exact_match_positive(self):
        assert assign_rank_label(self.prop(10, 20), self.gt((10, 20))) is RankLabel.POSITIVE

    def test_disjoint_negative(self):
        assert assign_rank_label(self.prop(0, 10), self.gt((50, 60))) is RankLabel.NEGATIVE

    def test_no_ground_truth_negative(self):
        gt = GroundTruthAnnotation("v", [])
        assert assign_rank_label(self.prop(0, 10), gt) is RankLabel.NEGATIVE

    def test_middle_band_ignored(self):
        # IoU 1/3 sits inside [0.3, 0.7]
        assert assign_rank_label(self.prop(0, 10), self.gt((5, 15))) is RankLabel.IGNORE

    def test_boundaries_are_strict(self):
        # IoU exactly 0.3: [0,3) vs [0,10); IoU exactly 0.7: [0,7) vs [0,10)
        assert assign_rank_label(self.prop(0, 3), self.gt((0, 10))) is RankLabel.IGNORE
        assert assign_rank_label(self.prop(0, 7), self.gt((0, 10))) is RankLabel.IGNORE

    def test_max_over_ground_truths(self):
        assert assign_rank_label(self.prop(10, 20), self.gt((0, 5), (10, 20))) is RankLabel.POSITIVE

    def test_trichotomy_on_random_cases(self):
        rng = np.random.default_rng(0)
        gt = self.gt((40, 90), (120, 160))
        for _ in range(200):
            begin = int(rng.integers(0, 180))
            label = assign_rank_label(self.prop(begin, begin + int(rng.integers(1, 80))), gt)
            assert label in (RankLabel.POSITIVE, RankLabel.NEGATIVE, RankLabel.IGNORE)


class TestMakeBatch:
    def test_scarce_positive_is_replicated(self):
        rng = np.random.default_rng(1)
        candidates = [(random_pair(rng), RankLabel.POSITIVE)]
        candidates += [(random_pair(rng), RankLabel.NEGATIVE) for _ in range(300)]
        cfg = small_cfg(batch_size=1024)
        batch = make_batch(candidates, cfg, seed=0)
        assert len(batch) == 1024
        positives = [pair for pair, label in batch if label == 1]
        assert len(positives) == 512
        assert all(pair is candidates[0][0] for pair in positives)

    def test_plentiful_sides_sampled_without_replacement(self):
        rng = np.random.default_rng(2)
        candidates = [(random_pair(rng), RankLabel.POSITIVE) for _ in range(600)]
        candidates += [(random_pair(rng), RankLabel.NEGATIVE) for _ in range(600)]
        batch = make_batch(candidates, small_cfg(batch_size=1024), seed=3)
        pos = [id(pair) for pair, label in batch if label == 1]
        neg = [id(pair) for pair, label in batch if label == 0]
        assert len(pos) == 512 and len(set(pos)) == 512
        assert len(neg) == 512 and len(set(neg)) == 512

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(3)
        candidates = [(random_pair(rng), RankLabel.POSITIVE) for _ in range(40)]
        candidates += [(random_pair(rng), RankLabel.NEGATIVE) for _ in range(40)]
        cfg = small_cfg(batch_size=64)
        first = make_batch(candidates, cfg, seed=7)
        second = make_batch(candidates, cfg, seed=7)
        assert [(id(p), t) for p, t in first] == [(id(p), t) for p, t in second]

    def test_ignores_never_selected(self):
        rng = np.random.default_rng(4)
        candidates = [(random_pair(rng), RankLabel.POSITIVE) for _ in range(5)]
        candidates += [(random_pair(rng), RankLabel.NEGATIVE) for _ in range(5)]
        ignored = [(random_pair(rng), RankLabel.IGNORE) for _ in range(50)]
        batch = make_batch(candidates + ignored, small_cfg(batch_size=32), seed=1)
        banned = {id(pair) for pair, _ in ignored}
        assert all(id(pair) not in banned for pair, _ in batch)

    def test_missing_polarity_raises(self):
        rng = np.random.default_rng(5)
        only_pos = [(random_pair(rng), RankLabel.POSITIVE)] * 3
        only_neg = [(random_pair(rng), RankLabel.NEGATIVE)] * 3
        with pytest.raises(NoNegatives):
            make_batch(only_pos, small_cfg(), seed=0)
        with pytest.raises(NoPositives):
            make_batch(only_neg, small_cfg(), seed=0)


class TestRankerForward:
    def test_zero_final_layer_gives_half(self):
        cfg = small_cfg()
        model = RankerModel(cfg, rng=np.random.default_rng(0))
        model.fc_out.weight.value[...] = 0.0
        model.fc_out.bias.value[...] = 0.0
        pair = make_pair(np.zeros((16, 4)), np.zeros((16, 4)))
        assert ranker_forward(pair, model) == pytest.approx(0.5)

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(6)
        model = RankerModel(small_cfg(), rng=rng)
        for _ in range(20):
            prob = ranker_forward(random_pair(rng), model)
            assert 0.0 < prob < 1.0

    def test_concatenated_width_follows_shape_algebra(self):
        cfg = small_cfg()  # samples 16 -> towers emit 10 steps of 2 channels
        model = RankerModel(cfg, rng=np.random.default_rng(0))
        assert cfg.tower_out == 20
        assert model.fc_hidden.weight.value.shape == (8, 40)

    def test_whole_model_gradcheck(self):
        rng = np.random.default_rng(7)
        cfg = small_cfg(samples=9, conv_channels=2, hidden=5, dim=3)
        model = RankerModel(cfg, rng=rng)
        inner = rng.standard_normal((4, 9, 3))
        outer = rng.standard_normal((4, 9, 3))
        targets = np.array([0, 1, 1, 0])

        def loss():
            value, _ = model._loss.forward(model.forward(inner, outer), targets)
            model._loss._cache.pop()
            return value

        logits = model.forward(inner, outer)
        _, _ = model._loss.forward(logits, targets)
        nn.zero_grads(model.params())
        grad = model._loss.backward()
        grad = model.fc_out.backward(grad)
        grad = model._hidden_relu.backward(grad)
        grad = model.fc_hidden.backward(grad)
        half = cfg.tower_out
        model._tower_backward("outer", grad[:, half:])
        model._tower_backward("inner", grad[:, :half])

        for p in model.params():
            numeric = nn.finite_difference_gradient(loss, p.value)
            assert nn.max_relative_error(p.grad, numeric) < 1e-4, p.name

    def test_shared_conv_halves_parameters(self):
        shared = RankerModel(small_cfg(share_conv=True), rng=np.random.default_rng(0))
        split = RankerModel(small_cfg(share_conv=False), rng=np.random.default_rng(0))
        assert len(shared.params()) == len(split.params()) - 2

    def test_shared_conv_trains_without_state_errors(self):
        rng = np.random.default_rng(8)
        cfg = small_cfg(share_conv=True, batch_size=8)
        model = RankerModel(cfg, rng=rng)
        inner = rng.standard_normal((8, 16, 4))
        outer = rng.standard_normal((8, 16, 4))
        targets = rng.integers(0, 2, size=8)
        loss_first, _ = model.train_step(inner, outer, targets, cfg.optimizer)
        loss_second, _ = model.train_step(inner, outer, targets, cfg.optimizer)
        assert np.isfinite(loss_first) and np.isfinite(loss_second)


def toy_video(video_id, rng, activity=None, num_frames=64, dim=4, snr=6.0):
    values = rng.standard_normal((num_frames, dim))
    intervals = []
    if activity is not None:
        begin, end = activity
        values[begin:end, 0] += snr
        intervals.append((TemporalInterval(begin, end), 1))
    return (
        FeatureSequence(video_id, values.astype(np.float32)),
        GroundTruthAnnotation(video_id, intervals),
    )


def separable_dataset(rng, num_videos=10):
    dataset = []
    for i in range(num_videos):
        begin = 8 * int(rng.integers(1, 5))
        dataset.append(toy_video(f"v{i}", rng, activity=(begin, begin + 16)))
    return dataset


class TestTraining:
    def test_zero_iterations_leaves_fresh_init(self):
        dataset = separable_dataset(np.random.default_rng(9))
        cfg = small_cfg()
        trained = train_ranker(dataset, cfg, iterations=0, seed=42)
        init_rng, _ = np.random.default_rng(42).spawn(2)
        fresh = RankerModel(cfg, rng=init_rng)
        for a, b in zip(trained.params(), fresh.params()):
            assert np.array_equal(a.value, b.value)

    def test_same_seed_bit_identical_checkpoints(self, tmp_path):
        dataset = separable_dataset(np.random.default_rng(10))
        cfg = small_cfg(batch_size=64)
        anchor_cfg = AnchorConfig(16, 1)
        first = train_ranker(dataset, cfg, iterations=5, seed=3, anchor_cfg=anchor_cfg)
        second = train_ranker(dataset, cfg, iterations=5, seed=3, anchor_cfg=anchor_cfg)
        path_a, path_b = tmp_path / "a.tcnw", tmp_path / "b.tcnw"
        first.save(path_a)
        second.save(path_b)
        assert path_a.read_bytes() == path_b.read_bytes()

    def test_learns_separable_signal(self):
        rng = np.random.default_rng(11)
        dataset = separable_dataset(rng, num_videos=12)
        cfg = small_cfg(conv_channels=4, hidden=16, batch_size=64)
        anchor_cfg = AnchorConfig(16, 1)
        model = train_ranker(dataset, cfg, iterations=60, seed=1, anchor_cfg=anchor_cfg)
        assert model.history[-1]["loss"] < model.history[0]["loss"]
        assert model.history[-1]["accuracy"] >= 0.95

    def test_batch_composition_every_iteration(self):
        dataset = separable_dataset(np.random.default_rng(12))
        cfg = small_cfg(batch_size=64)
        inner, outer, labels = build_labeled_candidates(dataset, AnchorConfig(16, 1), cfg)
        assert set(np.unique(labels)) <= {-1, 0, 1}
        from tempodet.ranker import select_batch_indices

        rng = np.random.default_rng(0)
        for _ in range(10):
            idx, targets = select_batch_indices(labels, cfg, rng)
            assert targets.sum() == 32
            assert len(targets) == 64
            assert np.all(labels[idx] == targets)


class TestRankProposals:
    def test_singleton(self):
        rng = np.random.default_rng(13)
        fs, _ = toy_video("v", rng)
        model = RankerModel(small_cfg(), rng=rng)
        anchor = Proposal(TemporalInterval(0, 16), 0, 1)
        ranked = rank_proposals(fs, [anchor], model, small_cfg())
        assert len(ranked) == 1
        assert 0.0 < ranked[0].score < 1.0

    def test_tie_break_by_begin_then_scale(self):
        rng = np.random.default_rng(14)
        fs, _ = toy_video("v", rng)
        cfg = small_cfg()
        model = RankerModel(cfg, rng=rng)
        model.fc_out.weight.value[...] = 0.0
        model.fc_out.bias.value[...] = 0.0
        anchors = generate_anchors(AnchorConfig(16, 2), fs.num_frames)
        ranked = rank_proposals(fs, anchors, model, cfg)
        assert all(p.score == 0.5 for p in ranked)
        keys = [(p.interval.begin, p.scale_index) for p in ranked]
        assert keys == sorted(keys)

    def test_rerun_is_identical(self):
        rng = np.random.default_rng(15)
        fs, _ = toy_video("v", rng)
        cfg = small_cfg()
        model = RankerModel(cfg, rng=rng)
        anchors = generate_anchors(AnchorConfig(16, 2), fs.num_frames)
        first = rank_proposals(fs, anchors, model, cfg)
        second = rank_proposals(fs, anchors, model, cfg)
        assert [(p.interval, p.score) for p in first] == [(p.interval, p.score) for p in second]

    def test_trained_model_orders_positives_above_negatives(self):
        rng = np.random.default_rng(16)
        dataset = separable_dataset(rng, num_videos=12)
        cfg = small_cfg(conv_channels=4, hidden=16, batch_size=64)
        anchor_cfg = AnchorConfig(16, 1)
        model = train_ranker(dataset, cfg, iterations=60, seed=2, anchor_cfg=anchor_cfg)
        fs, gt = dataset[0]
        ranked = rank_proposals(fs, generate_anchors(anchor_cfg, fs.num_frames), model, cfg)
        labels = [assign_rank_label(p, gt) for p in ranked]
        pos_scores = [p.score for p, l in zip(ranked, labels) if l is RankLabel.POSITIVE]
        neg_scores = [p.score for p, l in zip(ranked, labels) if l is RankLabel.NEGATIVE]
        assert np.mean(pos_scores) > np.mean(neg_scores)
