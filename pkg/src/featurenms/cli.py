"""Command-line pipeline: gen -> nms -> eval, plus bench and report."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from featurenms import bench as bench_mod
from featurenms.evaluation import evaluate
from featurenms.pipeline import METHODS, REPORT_VARIANTS, detections_by_image, resolve_params, suppress_dataset
from featurenms.plotting import plot_metric_bars, plot_pr_curves
from featurenms.scene_io import load_scenes, save_scenes
from featurenms.synthetic import GeneratorConfig, generate_dataset

log = logging.getLogger("featurenms")

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _read_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    suffix = Path(path).suffix.lower()
    if suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = GeneratorConfig.from_mapping(_read_config(args.config), seed=args.seed, num_scenes=args.num_scenes)
    scenes = generate_dataset(cfg)
    save_scenes(scenes, args.out)
    log.info("wrote %d scenes to %s", len(scenes), args.out)
    return 0


def cmd_nms(args: argparse.Namespace) -> int:
    overrides = {
        "n": args.n, "n1": args.n1, "n2": args.n2, "t": args.t,
        "sigma": args.sigma, "score_floor": args.score_floor,
    }
    params = resolve_params(args.method, **overrides)
    scenes = load_scenes(args.in_path)
    results = suppress_dataset(scenes, args.method, **params)
    save_scenes(results, args.out)
    log.info("%s NMS %s: %d -> %d detections", args.method, params,
             sum(len(s.proposals) for s in scenes), sum(len(s.proposals) for s in results))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    gt = load_scenes(args.gt)
    dets = detections_by_image(load_scenes(args.detections))
    report, curve = evaluate(gt, dets, iou_threshold=args.iou)
    curve.to_csv(args.pr_csv)
    _write_text(args.out, report.to_json())
    if args.plot:
        plot_pr_curves({Path(args.detections).stem: curve}, args.plot)
    print(report.to_json(), end="")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    methods = list(METHODS) if args.method == "all" else [m.strip() for m in args.method.split(",")]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)} or 'all'")
    rows = bench_mod.run_benchmark(methods, args.boxes, args.repeats, args.seed, full_scan=args.full_scan)
    print(bench_mod.format_rows(rows))
    if args.csv:
        bench_mod.write_csv(rows, args.csv)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenes = load_scenes(args.in_path)
    curves = {}
    rows = []
    for name, method, params in REPORT_VARIANTS:
        results = suppress_dataset(scenes, method, **params)
        report, curve = evaluate(scenes, detections_by_image(results))
        curve.to_csv(out_dir / f"pr_{name}.csv")
        curves[name] = curve
        rows.append({"method": name, **report.to_dict()})
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    plot_pr_curves(curves, out_dir / "pr_curves.png")
    plot_metric_bars([r["method"] for r in rows], [r["lamr"] for r in rows],
                     "log-average miss rate", out_dir / "lamr.png")
    for r in rows:
        print(f"{r['method']:<18} ap50={r['ap_50']:.4f} ap75={r['ap_75']:.4f} lamr={r['lamr']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="featurenms", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene file")
    p.add_argument("--config", help="generator config (.toml or .json)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--num-scenes", type=int, help="override num_scenes from the config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("nms", help="run a suppression method over every scene")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--n", type=float, help="IoU threshold (classical, adaptive)")
    p.add_argument("--n1", type=float, help="lower IoU threshold (feature)")
    p.add_argument("--n2", type=float, help="upper IoU threshold (feature)")
    p.add_argument("--t", type=float, help="embedding distance threshold (feature)")
    p.add_argument("--sigma", type=float, help="Gaussian width (soft)")
    p.add_argument("--score-floor", type=float, help="drop re-scored detections below this (soft)")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("eval", help="compute AP@0.5, AP@0.75 and log-average miss rate")
    p.add_argument("--detections", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--pr-csv", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--plot", help="optional PR-curve image path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time suppression kernels on one dense scene")
    p.add_argument("--method", default="classical,feature", help="method, comma list, or 'all'")
    p.add_argument("--boxes", type=int, required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--full-scan", action="store_true", help="disable the grid lookup")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="compare all methods on a scene file, with figures")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"featurenms {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
