"""Command-line entry points wiring the pipeline stages together.

Seven batch subcommands cover the full workflow::

    crosspoint synthetic --config run.cfg     # generate a crossings dataset
    crosspoint augment   --config run.cfg     # grow a dataset with transforms
    crosspoint train     --config run.cfg     # fit the detector, plot the loss
    crosspoint detect    --config run.cfg     # detections CSV from a checkpoint
    crosspoint evaluate  --config run.cfg     # precision/recall/F1 CSV
    crosspoint metrics   --config run.cfg     # per-tile complexity metrics CSV
    crosspoint analyze   --config run.cfg     # error-sensitivity regressions

The config file is flat ``key = value`` text; unknown keys are rejected.
Every stage draws its randomness from the single mandatory ``seed``,
fanned out through a per-stage counter, so stages are individually
re-runnable and whole pipelines are byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from .dataset import load_annotations, save_annotations, augment_dataset
from .detector import (
    ArchitectureConfig,
    DetectorConfig,
    LossConfig,
    detect,
    load_checkpoint,
    save_checkpoint,
    train,
    write_trace_csv,
)
from .evaluation import MatchResult, eval_report, match_detections, merge_results, write_evaluation_csv
from .geometry import Box, ScoredBox
from .image_metrics import TileMetrics, tile_metrics
from .plotting import ema_smooth, loss_curve_svg
from .regression import analyze_errors, write_regression_csv
from .synthetic import SyntheticConfig, generate_dataset

__all__ = ["RunConfig", "load_run_config", "main"]

_STAGE_ORDER = ("synthetic", "augment", "train", "detect", "evaluate", "metrics", "analyze")


@dataclass
class RunConfig:
    """Everything a subcommand needs, read from the config file plus flags."""

    seed: int | None = None
    annotations: str | None = None
    output_dir: str = "."
    checkpoint: str | None = None
    detections: str | None = None
    evaluation: str | None = None
    metrics: str | None = None
    steps: int = 5000
    target: int | None = None
    smoothing: float = 0.9
    alpha: float = 0.05
    init: str = "uniform"
    tiles: int = 200
    tile_size: int = 64
    learning_rate: float | None = None
    lam: float | None = None
    n_cls: int | None = None
    head_batch: int | None = None
    hi_threshold: float | None = None
    lo_threshold: float | None = None
    nms_threshold: float | None = None
    nms_max: int | None = None
    proposals_to_head: int | None = None
    threshold: float | None = None


_INT_KEYS = {"seed", "steps", "target", "tiles", "tile_size", "n_cls", "head_batch", "nms_max", "proposals_to_head"}
_FLOAT_KEYS = {
    "smoothing",
    "alpha",
    "learning_rate",
    "lam",
    "hi_threshold",
    "lo_threshold",
    "nms_threshold",
    "threshold",
}
_STR_KEYS = {"annotations", "output_dir", "checkpoint", "detections", "evaluation", "metrics", "init"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def load_run_config(path: str | os.PathLike) -> RunConfig:
    """Parse a flat key=value config file; unknown keys raise ValueError."""
    cfg = RunConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _ALL_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                if key in _INT_KEYS:
                    setattr(cfg, key, int(value))
                elif key in _FLOAT_KEYS:
                    setattr(cfg, key, float(value))
                else:
                    setattr(cfg, key, value)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def stage_seed(seed: int, stage: str) -> int:
    """Derive the per-stage seed from the run seed via a counter split."""
    counter = _STAGE_ORDER.index(stage)
    return int(np.random.SeedSequence((seed, counter)).generate_state(1, dtype=np.uint64)[0])


def _require(value, key: str):
    if value is None:
        raise ValueError(f"config key {key!r} is required for this command")
    return value


def _require_file(path: str | None, key: str) -> str:
    path = _require(path, key)
    if not os.path.isfile(path):
        raise ValueError(f"{key} path does not exist: {path}")
    return path


def _out_path(cfg: RunConfig, explicit: str | None, default_name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return explicit if explicit else os.path.join(cfg.output_dir, default_name)


def _detector_config(cfg: RunConfig) -> DetectorConfig:
    arch = ArchitectureConfig(init=cfg.init)
    loss = LossConfig()
    overrides = {}
    for name in (
        "learning_rate",
        "lam",
        "n_cls",
        "head_batch",
        "hi_threshold",
        "lo_threshold",
        "nms_threshold",
        "nms_max",
        "proposals_to_head",
    ):
        value = getattr(cfg, name)
        if value is not None:
            overrides[name] = value
    if cfg.threshold is not None:
        overrides["detect_threshold"] = cfg.threshold
    if overrides:
        loss = replace(loss, **overrides)
    return DetectorConfig(arch=arch, loss=loss)


def cmd_synthetic(cfg: RunConfig) -> None:
    seed = stage_seed(_require(cfg.seed, "seed"), "synthetic")
    syn = SyntheticConfig(n_tiles=cfg.tiles, tile_size=cfg.tile_size)
    items = generate_dataset(syn, seed)
    out = _out_path(cfg, cfg.annotations, "synthetic.json")
    save_annotations(items, out)
    boxes = sum(len(at.ground_truths) for at in items)
    negatives = sum(1 for at in items if not at.ground_truths)
    print(f"synthetic: wrote {len(items)} tiles ({negatives} negative, {boxes} crossings) to {out}")


def cmd_augment(cfg: RunConfig) -> None:
    seed = stage_seed(_require(cfg.seed, "seed"), "augment")
    src = _require_file(cfg.annotations, "annotations")
    items = load_annotations(src)
    target = _require(cfg.target, "target")
    grown = augment_dataset(items, target, seed)
    out = _out_path(cfg, None, "augmented.json")
    save_annotations(grown, out)
    print(f"augment: {len(items)} -> {len(grown)} tiles ({len(grown) - len(items)} new) at {out}")


def cmd_train(cfg: RunConfig) -> None:
    seed = stage_seed(_require(cfg.seed, "seed"), "train")
    src = _require_file(cfg.annotations, "annotations")
    items = load_annotations(src)
    config = _detector_config(cfg)
    params, trace = train(items, config, seed=seed, steps=cfg.steps)
    ckpt = _out_path(cfg, cfg.checkpoint, "checkpoint.json")
    save_checkpoint(params, config, ckpt)
    trace_path = os.path.join(cfg.output_dir, "trace.csv")
    write_trace_csv(trace, trace_path)
    svg_path = os.path.join(cfg.output_dir, "loss.svg")
    if len(trace):
        loss_curve_svg(trace, svg_path, factor=cfg.smoothing)
        smoothed = ema_smooth(trace.totals(), cfg.smoothing)
        print(
            f"train: {cfg.steps} steps on {len(items)} tiles, smoothed total "
            f"{smoothed[0]:.4f} -> {smoothed[-1]:.4f}; wrote {ckpt}, {trace_path}, {svg_path}"
        )
    else:
        print(f"train: 0 steps, checkpoint is the seeded initialization; wrote {ckpt}, {trace_path}")


def cmd_detect(cfg: RunConfig) -> None:
    src = _require_file(cfg.annotations, "annotations")
    ckpt = _require_file(cfg.checkpoint or os.path.join(cfg.output_dir, "checkpoint.json"), "checkpoint")
    items = load_annotations(src)
    params, config = load_checkpoint(ckpt)
    if cfg.threshold is not None:
        config = DetectorConfig(
            arch=config.arch, loss=replace(config.loss, detect_threshold=cfg.threshold)
        )
    out = _out_path(cfg, cfg.detections, "detections.csv")
    count = 0
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "cx", "cy", "w", "h", "score"])
        for at in items:
            for d in detect(at.tile, params, config):
                b = d.box
                writer.writerow(
                    [at.tile.id]
                    + [repr(float(v)) for v in (b.cx, b.cy, b.w, b.h, d.score)]
                )
                count += 1
    print(f"detect: {count} detections over {len(items)} tiles -> {out}")


def _read_detections(path: str) -> dict[str, list[ScoredBox]]:
    by_tile: dict[str, list[ScoredBox]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"tile_id", "cx", "cy", "w", "h", "score"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected detection columns {sorted(required)}")
        for row in reader:
            box = Box(float(row["cx"]), float(row["cy"]), float(row["w"]), float(row["h"]))
            by_tile.setdefault(row["tile_id"], []).append(ScoredBox(box, float(row["score"])))
    return by_tile


def cmd_evaluate(cfg: RunConfig) -> None:
    src = _require_file(cfg.annotations, "annotations")
    det_path = _require_file(
        cfg.detections or os.path.join(cfg.output_dir, "detections.csv"), "detections"
    )
    items = load_annotations(src)
    by_tile = _read_detections(det_path)
    unknown = sorted(set(by_tile) - {at.tile.id for at in items})
    if unknown:
        raise ValueError(f"detections reference unknown tiles: {unknown[:5]}")
    rows = [
        (at.tile.id, match_detections(by_tile.get(at.tile.id, []), at.ground_truths))
        for at in items
    ]
    out = _out_path(cfg, cfg.evaluation, "evaluation.csv")
    write_evaluation_csv(rows, out)
    total = merge_results([m for _, m in rows])
    rep = eval_report(total)
    print(
        f"evaluate: tp={total.tp} fp={total.fp} fn={total.fn} "
        f"precision={rep.precision} recall={rep.recall} f1={rep.f1} -> {out}"
    )


def cmd_metrics(cfg: RunConfig) -> None:
    src = _require_file(cfg.annotations, "annotations")
    items = load_annotations(src)
    out = _out_path(cfg, cfg.metrics, "metrics.csv")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "edge_density", "rgb_diversity", "sharpness"])
        for at in items:
            m = tile_metrics(at.tile)
            writer.writerow([at.tile.id, repr(m.edge_density), str(m.rgb_diversity), repr(m.sharpness)])
    print(f"metrics: {len(items)} tiles -> {out}")


def _read_eval_counts(path: str) -> list[tuple[str, MatchResult]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"tile_id", "tp", "fp", "fn"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected evaluation columns {sorted(required)}")
        for row in reader:
            if row["tile_id"] in ("TOTAL", "MACRO"):
                continue
            rows.append(
                (
                    row["tile_id"],
                    MatchResult(int(row["tp"]), int(row["fp"]), int(row["fn"]), []),
                )
            )
    return rows


def _read_metrics(path: str) -> list[tuple[str, TileMetrics]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"tile_id", "edge_density", "rgb_diversity", "sharpness"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: expected metric columns {sorted(required)}")
        for row in reader:
            rows.append(
                (
                    row["tile_id"],
                    TileMetrics(
                        float(row["edge_density"]),
                        int(row["rgb_diversity"]),
                        float(row["sharpness"]),
                    ),
                )
            )
    return rows


def cmd_analyze(cfg: RunConfig) -> None:
    eval_path = _require_file(
        cfg.evaluation or os.path.join(cfg.output_dir, "evaluation.csv"), "evaluation"
    )
    metrics_path = _require_file(
        cfg.metrics or os.path.join(cfg.output_dir, "metrics.csv"), "metrics"
    )
    per_tile_eval = _read_eval_counts(eval_path)
    per_tile_metrics = _read_metrics(metrics_path)
    fp_report, fn_report = analyze_errors(per_tile_eval, per_tile_metrics, alpha=cfg.alpha)
    os.makedirs(cfg.output_dir, exist_ok=True)
    fp_out = os.path.join(cfg.output_dir, "regression_fp.csv")
    fn_out = os.path.join(cfg.output_dir, "regression_fn.csv")
    write_regression_csv(fp_report, fp_out)
    write_regression_csv(fn_report, fn_out)
    print(
        f"analyze: {len(per_tile_eval)} tiles, df={fp_report.df}; wrote {fp_out}, {fn_out}"
    )


_COMMANDS = {
    "augment": cmd_augment,
    "train": cmd_train,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
    "metrics": cmd_metrics,
    "analyze": cmd_analyze,
    "synthetic": cmd_synthetic,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosspoint",
        description="Road-crossing detection pipeline for scanned map tiles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="run seed (overrides the config file)")
        p.add_argument("--steps", type=int, help="training step count override")
        p.add_argument("--lr", type=float, help="learning-rate override")
        p.add_argument("--threshold", type=float, help="detection probability threshold override")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.steps is not None:
            cfg.steps = args.steps
        if args.lr is not None:
            cfg.learning_rate = args.lr
        if args.threshold is not None:
            cfg.threshold = args.threshold
        _COMMANDS[args.command](cfg)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
