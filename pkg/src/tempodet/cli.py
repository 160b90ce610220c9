"""Command-line entry point for the whole pipeline.

Subcommands: synth, train-ranker, train-classifier, rank, detect, eval,
export-timelines. Every option can also come from a flat JSON config file
(``--config``, keys named like the option dests); explicit flags win over
the config file, which wins over built-in defaults.

Exit codes: 0 success, 2 usage error, 3 data error (bad files, bad
configuration, missing ground truth), 4 internal error.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import json
from pathlib import Path
import sys

import numpy as np

from . import data_io, detect as detect_mod, metrics, nn
from .anchors import AnchorConfig, generate_anchors
from .classifier import ClassifierConfig, ClassifierModel, train_classifier
from .errors import ParseError, PipelineError
from .ranker import RankerConfig, RankerModel, rank_proposals, train_ranker

EVAL_PROPOSAL_COUNTS = (10, 50, 100, 500)
EVAL_MAP_THRESHOLDS = (0.5, 0.75, 0.95)
CURVE_PROPOSAL_COUNTS = (1, 5, 20)

_REQUIRED = object()  # default marker for options that must come from flag or config


class _Subcommand:
    """Wraps a subparser so every option records its real default separately;
    the parsed namespace then only contains explicitly passed flags."""

    def __init__(self, sub: argparse.ArgumentParser):
        self.sub = sub
        self.defaults: dict = {}
        sub.add_argument("--config", default=None, help="JSON file of option defaults (flags win)")

    def add(self, flag: str, default, **kwargs):
        dest = kwargs.pop("dest", flag.lstrip("-").replace("-", "_"))
        self.defaults[dest] = default
        self.sub.add_argument(flag, dest=dest, default=argparse.SUPPRESS, **kwargs)

    def add_flag_pair(self, name: str, default: bool):
        dest = name.replace("-", "_")
        self.defaults[dest] = default
        self.sub.add_argument(f"--{name}", dest=dest, action="store_true", default=argparse.SUPPRESS)
        self.sub.add_argument(f"--no-{name}", dest=dest, action="store_false", default=argparse.SUPPRESS)

    def finish(self, func):
        self.sub.set_defaults(_func=func, _defaults=self.defaults)


def _load_config(parser, path):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        parser.error(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        parser.error(f"config file {path}: line {err.lineno}: {err.msg}")
    if not isinstance(raw, dict):
        parser.error(f"config file {path}: top level must be an object")
    return raw


def _resolve(parser, args) -> argparse.Namespace:
    """defaults <- config file <- explicit flags; unknown config keys are usage errors."""
    merged = dict(args._defaults)
    if args.config is not None:
        overrides = _load_config(parser, args.config)
        unknown = set(overrides) - set(merged)
        if unknown:
            parser.error(f"config file {args.config}: unknown keys {sorted(unknown)}")
        merged.update(overrides)
    merged.update({k: v for k, v in vars(args).items() if not k.startswith("_") and k != "config"})
    for key, value in merged.items():
        if value is _REQUIRED:
            parser.error(f"missing required option --{key.replace('_', '-')}")
    return argparse.Namespace(**merged)


def _write_sidecar(checkpoint_path, payload):
    Path(f"{checkpoint_path}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_sidecar(checkpoint_path):
    sidecar = Path(f"{checkpoint_path}.json")
    if not sidecar.exists():
        raise ParseError(f"missing model sidecar {sidecar}")
    try:
        return json.loads(sidecar.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ParseError(f"{sidecar}: line {err.lineno}: {err.msg}") from err


def _load_ranker(checkpoint_path):
    meta = _read_sidecar(checkpoint_path)
    cfg = RankerConfig(
        dim=meta["dim"],
        samples=meta["samples"],
        conv_channels=meta["conv_channels"],
        hidden=meta["hidden"],
        scale_factor=meta["scale_factor"],
        share_conv=meta["share_conv"],
        relu_after_hidden=meta["relu_after_hidden"],
    )
    model = RankerModel(cfg, rng=np.random.default_rng(0))
    model.load(checkpoint_path)
    anchor_cfg = AnchorConfig(base_length=meta["anchor_base_length"], num_scales=meta["anchor_num_scales"])
    return model, cfg, anchor_cfg


def _load_classifier(checkpoint_path):
    meta = _read_sidecar(checkpoint_path)
    cfg = ClassifierConfig(dim=meta["dim"], num_classes=meta["num_classes"])
    model = ClassifierModel(cfg, rng=np.random.default_rng(0))
    model.load(checkpoint_path)
    return model, cfg


def _map_videos(work, video_ids, workers):
    """Apply ``work`` per video; aggregation sorts by id so pool size never matters."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(video_ids, pool.map(work, video_ids)))
    else:
        results = {video_id: work(video_id) for video_id in video_ids}
    return {video_id: results[video_id] for video_id in sorted(results)}


def cmd_synth(opts) -> int:
    cfg = data_io.SynthConfig(
        num_videos=opts.num_videos,
        min_frames=opts.min_frames,
        max_frames=opts.max_frames,
        dim=opts.dim,
        num_classes=opts.num_classes,
        min_activities=opts.min_activities,
        max_activities=opts.max_activities,
        min_duration=opts.min_duration,
        max_duration=opts.max_duration,
        snr=opts.snr,
        boundary_signal=opts.boundary_signal,
        seed=opts.seed,
    )
    manifest, features = data_io.generate_synthetic(cfg)
    data_io.write_dataset(opts.out, manifest, features)
    print(f"wrote {len(features)} videos under {opts.out}")
    return 0


def cmd_train_ranker(opts) -> int:
    _, dataset = data_io.load_dataset(opts.manifest, opts.features)
    dim = dataset[0][0].dim
    anchor_cfg = AnchorConfig(base_length=opts.base_length, num_scales=opts.num_scales)
    cfg = RankerConfig(
        dim=dim,
        samples=opts.samples,
        conv_channels=opts.conv_channels,
        hidden=opts.hidden,
        scale_factor=opts.scale_factor,
        iou_pos=opts.iou_pos,
        iou_neg=opts.iou_neg,
        batch_size=opts.batch_size,
        pos_frac=opts.pos_frac,
        share_conv=opts.share_conv,
        relu_after_hidden=opts.hidden_relu,
        optimizer=nn.OptimizerConfig(opts.learning_rate, opts.momentum, opts.weight_decay),
    )
    model = train_ranker(dataset, cfg, opts.iterations, opts.seed, anchor_cfg=anchor_cfg)
    model.save(opts.out)
    _write_sidecar(
        opts.out,
        {
            "kind": "ranker",
            "dim": dim,
            "samples": cfg.samples,
            "conv_channels": cfg.conv_channels,
            "hidden": cfg.hidden,
            "scale_factor": cfg.scale_factor,
            "share_conv": cfg.share_conv,
            "relu_after_hidden": cfg.relu_after_hidden,
            "anchor_base_length": opts.base_length,
            "anchor_num_scales": opts.num_scales,
        },
    )
    if model.history:
        last = model.history[-1]
        print(f"trained ranker: {opts.iterations} iterations, final loss {last['loss']:.4f}, "
              f"batch accuracy {last['accuracy']:.3f}")
    print(f"saved checkpoint to {opts.out}")
    return 0


def cmd_train_classifier(opts) -> int:
    manifest, dataset = data_io.load_dataset(opts.manifest, opts.features)
    dim = dataset[0][0].dim
    anchor_cfg = AnchorConfig(base_length=opts.base_length, num_scales=opts.num_scales)
    cfg = ClassifierConfig(
        dim=dim,
        num_classes=len(manifest.label_names),
        iou_pos=opts.iou_pos,
        iou_neg=opts.iou_neg,
        batch_size=opts.batch_size,
        bg_per_batch=opts.bg_per_batch,
        optimizer=nn.OptimizerConfig(opts.learning_rate, opts.momentum, opts.weight_decay),
    )
    model = train_classifier(dataset, cfg, opts.iterations, opts.seed, anchor_cfg=anchor_cfg)
    model.save(opts.out)
    _write_sidecar(opts.out, {"kind": "classifier", "dim": dim, "num_classes": cfg.num_classes})
    if model.history:
        last = model.history[-1]
        print(f"trained classifier: {opts.iterations} iterations, final loss {last['loss']:.4f}, "
              f"batch accuracy {last['accuracy']:.3f}")
    print(f"saved checkpoint to {opts.out}")
    return 0


def cmd_rank(opts) -> int:
    _, dataset = data_io.load_dataset(opts.manifest, opts.features)
    features = {fs.video_id: fs for fs, _ in dataset}
    model, cfg, anchor_cfg = _load_ranker(opts.ranker)

    def work(video_id):
        fs = features[video_id]
        return rank_proposals(fs, generate_anchors(anchor_cfg, fs.num_frames), model, cfg)

    ranked = _map_videos(work, list(features), opts.workers)
    detect_mod.write_proposals(opts.out, ranked)
    total = sum(len(v) for v in ranked.values())
    print(f"ranked {total} proposals over {len(ranked)} videos -> {opts.out}")
    return 0


def cmd_detect(opts) -> int:
    manifest, dataset = data_io.load_dataset(opts.manifest, opts.features)
    features = {fs.video_id: fs for fs, _ in dataset}
    ranker_model, ranker_cfg, anchor_cfg = _load_ranker(opts.ranker)
    classifier_model, classifier_cfg = _load_classifier(opts.classifier)
    models = detect_mod.DetectionModels(ranker_model, ranker_cfg, classifier_model, classifier_cfg, anchor_cfg)
    cfg = detect_mod.DetectConfig(
        top_k=opts.top_k,
        nms_threshold=opts.nms_threshold,
        score_combination=opts.score_combination,
        nms_before_classify=opts.nms_before_classify,
    )

    def work(video_id):
        return detect_mod.detect(features[video_id], models, cfg)

    per_video = _map_videos(work, list(features), opts.workers)
    detections = [d for video_id in per_video for d in per_video[video_id]]
    detect_mod.write_detections(opts.out, detections, label_names=manifest.label_names)
    print(f"wrote {len(detections)} detections over {len(per_video)} videos -> {opts.out}")
    return 0


def cmd_eval(opts) -> int:
    manifest = data_io.load_manifest(opts.manifest)
    gt_by_video = manifest.annotations_by_video()
    proposals = detect_mod.read_proposals(opts.proposals)
    for video_id in proposals:
        proposals[video_id].sort(key=lambda p: (-p.score, p.interval.begin, p.scale_index))
    detections = detect_mod.read_detections(opts.detections)

    out_dir = Path(opts.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}

    counts = [int(k) for k in opts.proposal_counts]
    print(f"{'metric':<24}" + "".join(f"@{k:<8}" for k in counts))
    ar_values = [metrics.average_recall(proposals, gt_by_video, k) for k in counts]
    print(f"{'avg-recall[.5:.05:.95]':<24}" + "".join(f"{v:<9.4f}" for v in ar_values))
    r5_values = [metrics.recall_at_k(proposals, gt_by_video, k, 0.5) for k in counts]
    print(f"{'recall@0.5':<24}" + "".join(f"{v:<9.4f}" for v in r5_values))
    for k, ar, r5 in zip(counts, ar_values, r5_values):
        summary[f"average_recall@{k}"] = ar
        summary[f"recall_iou0.5@{k}"] = r5

    for tiou in EVAL_MAP_THRESHOLDS:
        result = metrics.mean_average_precision(detections, gt_by_video, tiou)
        print(f"{f'mAP@{tiou:.2f}':<24}{result.map_value:<9.4f}")
        summary[f"mAP@{tiou:.2f}"] = result.map_value

    for k in CURVE_PROPOSAL_COUNTS:
        curve = metrics.recall_vs_iou_curve(proposals, gt_by_video, k)
        metrics.write_curve(out_dir / f"recall_vs_iou_top{k}.txt", curve.iou_grid, curve.recall)
    metrics.write_summary(out_dir / "summary.json", summary)
    print(f"wrote plot data and summary.json under {out_dir}")
    return 0


def cmd_export_timelines(opts) -> int:
    manifest = data_io.load_manifest(opts.manifest)
    proposals = detect_mod.read_proposals(opts.proposals)
    for video_id in proposals:
        proposals[video_id].sort(key=lambda p: (-p.score, p.interval.begin, p.scale_index))
    out_dir = Path(opts.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for video_id in sorted(manifest.videos):
        entry = manifest.videos[video_id]
        lines = [f"video {video_id} frames {entry.num_frames}"]
        for interval, class_id in entry.annotations:
            lines.append(f"gt {interval.begin} {interval.end} {manifest.label_names[class_id - 1]}")
        for p in proposals.get(video_id, [])[: opts.top]:
            lines.append(f"proposal {p.interval.begin} {p.interval.end} {p.score:.6f}")
        (out_dir / f"{video_id}.timeline.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(manifest.videos)} timeline files under {out_dir}")
    return 0


def _dataset_opts(cmd: _Subcommand):
    cmd.add("--manifest", _REQUIRED)
    cmd.add("--features", _REQUIRED)


def _training_opts(cmd: _Subcommand, learning_rate: float):
    _dataset_opts(cmd)
    cmd.add("--out", _REQUIRED, help="checkpoint path to write")
    cmd.add("--iterations", 300, type=int)
    cmd.add("--seed", 0, type=int)
    cmd.add("--batch-size", 1024, type=int)
    cmd.add("--base-length", 16, type=int)
    cmd.add("--num-scales", 4, type=int)
    cmd.add("--iou-pos", 0.7, type=float)
    cmd.add("--iou-neg", 0.3, type=float)
    cmd.add("--learning-rate", learning_rate, type=float)
    cmd.add("--momentum", 0.9, type=float)
    cmd.add("--weight-decay", 5e-5, type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempodet", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="_command", required=True)

    cmd = _Subcommand(commands.add_parser("synth", help="generate a synthetic labeled dataset"))
    cmd.add("--out", _REQUIRED, help="output dataset directory")
    cmd.add("--num-videos", 200, type=int)
    cmd.add("--min-frames", 192, type=int)
    cmd.add("--max-frames", 320, type=int)
    cmd.add("--dim", 8, type=int)
    cmd.add("--num-classes", 5, type=int)
    cmd.add("--min-activities", 1, type=int)
    cmd.add("--max-activities", 2, type=int)
    cmd.add("--min-duration", 72, type=int)
    cmd.add("--max-duration", 88, type=int)
    cmd.add("--snr", 2.5, type=float)
    cmd.add("--seed", 0, type=int)
    cmd.add_flag_pair("boundary-signal", True)
    cmd.finish(cmd_synth)

    cmd = _Subcommand(commands.add_parser("train-ranker", help="train the proposal ranker"))
    _training_opts(cmd, learning_rate=0.1)
    cmd.add("--samples", 16, type=int)
    cmd.add("--conv-channels", 64, type=int)
    cmd.add("--hidden", 500, type=int)
    cmd.add("--scale-factor", 2.0, type=float)
    cmd.add("--pos-frac", 0.5, type=float)
    cmd.add_flag_pair("share-conv", False)
    cmd.add_flag_pair("hidden-relu", True)
    cmd.finish(cmd_train_ranker)

    cmd = _Subcommand(commands.add_parser("train-classifier", help="train the segment classifier"))
    _training_opts(cmd, learning_rate=0.001)
    cmd.add("--bg-per-batch", 64, type=int)
    cmd.finish(cmd_train_classifier)

    cmd = _Subcommand(commands.add_parser("rank", help="score and sort anchor proposals per video"))
    _dataset_opts(cmd)
    cmd.add("--ranker", _REQUIRED, help="ranker checkpoint")
    cmd.add("--out", _REQUIRED, help="proposals JSONL to write")
    cmd.add("--workers", 1, type=int)
    cmd.finish(cmd_rank)

    cmd = _Subcommand(commands.add_parser("detect", help="run the full detection pipeline"))
    _dataset_opts(cmd)
    cmd.add("--ranker", _REQUIRED)
    cmd.add("--classifier", _REQUIRED)
    cmd.add("--out", _REQUIRED, help="detections JSONL to write")
    cmd.add("--top-k", 20, type=int)
    cmd.add("--nms-threshold", 0.45, type=float)
    cmd.add("--score-combination", "classifier_only", choices=("classifier_only", "product"))
    cmd.add_flag_pair("nms-before-classify", True)
    cmd.add("--workers", 1, type=int)
    cmd.finish(cmd_detect)

    cmd = _Subcommand(commands.add_parser("eval", help="print the metrics table and export plot data"))
    cmd.add("--manifest", _REQUIRED)
    cmd.add("--proposals", _REQUIRED)
    cmd.add("--detections", _REQUIRED)
    cmd.add("--out", _REQUIRED, help="directory for plot data and summary.json")
    cmd.add("--proposal-counts", list(EVAL_PROPOSAL_COUNTS), type=int, nargs="+")
    cmd.finish(cmd_eval)

    cmd = _Subcommand(commands.add_parser("export-timelines", help="per-video ground truth vs top proposals"))
    cmd.add("--manifest", _REQUIRED)
    cmd.add("--proposals", _REQUIRED)
    cmd.add("--out", _REQUIRED, help="directory for timeline files")
    cmd.add("--top", 5, type=int)
    cmd.finish(cmd_export_timelines)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = _resolve(parser, args)
    try:
        return args._func(opts)
    except PipelineError as err:
        print(f"error: data: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # CLI boundary: anything unexpected is an internal error
        print(f"error: internal: {type(err).__name__}: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
