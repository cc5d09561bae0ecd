"""``ddq`` command-line interface.

Exit codes: 0 success, 1 domain error (invalid values, impossible
constraints), 2 I/O or parse error (including bad arguments).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .assignment import DEFAULT_K, DEFAULT_WEIGHTS, build_cost_matrix, center_prior_match, hungarian
from .config import config_hash, default_config_yaml, load_config
from .dense_queries import build_pyramid
from .duplicate_removal import DEFAULT_IOU_THRESHOLD, nms_indices
from .errors import FormatError, ValidationError
from .evaluation import average_precision
from .io import (read_boxes, read_coco_detections, read_coco_gts, read_gt_boxes, read_queries,
                 write_csv, write_json)
from .simulator import run_experiment, worker_count
from .svg import report_plot

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


def _weights(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be three comma-separated numbers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"weights must be three comma-separated numbers, got {text!r}")
    return vals


def cmd_nms(args) -> int:
    boxes, scores, records = read_boxes(args.input)
    if scores is None:
        if boxes.shape[0] > 1:
            raise ValidationError("NMS needs a score for every box")
        scores = np.ones(boxes.shape[0])
    kept = nms_indices(boxes, scores, args.iou_thresh, args.max_keep)
    if records is not None:
        survivors = [records[i] for i in kept]
    else:
        survivors = [{"box": boxes[i].tolist(), "score": float(scores[i])} for i in kept]
    write_json(args.output, {
        "iou_threshold": args.iou_thresh,
        "max_keep": args.max_keep,
        "kept_indices": [int(i) for i in kept],
        "boxes": survivors,
    })
    return EXIT_OK


def cmd_assign(args) -> int:
    image_size = tuple(args.image_size) if args.image_size else None
    q = read_queries(args.queries, image_size)
    gts = read_gt_boxes(args.gts)
    w, h = q.meta["image_size"]
    if args.no_prior:
        result = hungarian(build_cost_matrix(q, gts, args.weights, (w, h)))
    else:
        result = center_prior_match(q, build_pyramid(w, h), gts, args.k, args.weights)
    doc = result.to_dict()
    doc.update({"k": None if args.no_prior else args.k, "weights": list(args.weights)})
    write_json(args.output, doc)
    return EXIT_OK


def cmd_eval(args) -> int:
    dets = read_coco_detections(args.detections)
    gts = read_coco_gts(args.gts)
    report = average_precision(dets, gts, ar_ks=tuple(args.ar_k))
    write_json(args.output, report.to_dict())
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.print_default_config:
        print(default_config_yaml(args.kind or "recall"), end="")
        return EXIT_OK
    if args.config is None:
        raise FormatError("a config file is required (or --print-default-config)")
    start = time.perf_counter()
    cfg = load_config(args.config)
    changes = {}
    if args.seeds is not None:
        changes["seeds"] = args.seeds
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.kind is not None:
        changes["experiment"] = args.kind
    if changes:
        cfg = cfg.replace(**changes)
    threads = worker_count()
    report = run_experiment(cfg, threads)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {"csv": out / "results.csv", "summary": out / "summary.json"}
    write_csv(outputs["csv"], report.columns, report.rows)
    write_json(outputs["summary"], report.to_summary())
    if args.plot:
        outputs["plot"] = out / "plot.svg"
        outputs["plot"].write_text(report_plot(report))
    outputs["manifest"] = out / "manifest.json"
    write_json(outputs["manifest"], {
        "command": " ".join(["ddq"] + list(args.argv)),
        "experiment": cfg.experiment,
        "config_path": str(args.config),
        "config_sha256": config_hash(args.config),
        "master_seed": cfg.master_seed,
        "seeds": cfg.seeds,
        "artifact_version": __version__,
        "kernel_backend": BACKEND,
        "threads": threads,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_clock_seconds": round(time.perf_counter() - start, 3),
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ddq {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nms", help="class-agnostic duplicate removal on a box file")
    p.add_argument("input", help="JSON or CSV box file")
    p.add_argument("--iou-thresh", type=float, default=DEFAULT_IOU_THRESHOLD)
    p.add_argument("--max-keep", type=int, default=None)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("assign", help="center-prior one-to-one assignment")
    p.add_argument("queries", help="query JSON file")
    p.add_argument("gts", help="ground-truth JSON file")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--weights", type=_weights, default=DEFAULT_WEIGHTS, help="w_cls,w_l1,w_giou")
    p.add_argument("--image-size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--no-prior", action="store_true", help="plain Hungarian without the center prior")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("experiment", help="run a seeded simulator experiment")
    p.add_argument("config", nargs="?", help="YAML or JSON experiment config")
    p.add_argument("--out", default="ddq-out")
    p.add_argument("--seeds", type=int, default=None, help="number of trials")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--kind", choices=("recall", "gradient", "cascade"), default=None)
    p.add_argument("--plot", action="store_true", help="also write plot.svg")
    p.add_argument("--print-default-config", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("eval", help="AP and AR for COCO-style detections")
    p.add_argument("detections")
    p.add_argument("gts")
    p.add_argument("--ar-k", type=int, nargs="+", default=[100, 200, 300])
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"ddq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"ddq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"ddq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
