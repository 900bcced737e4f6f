"""Throughput benchmark for the suppression kernels.

Wall time and algorithmic counters are reported separately. Timings cover
only the array-level kernels; scene generation and conversion are excluded.
"""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from featurenms.evaluation import proposal_densities
from featurenms.geometry import boxes_to_array
from featurenms.pipeline import METHOD_DEFAULTS, METHODS
from featurenms.suppression import (
    adaptive_nms_indices,
    classical_nms_indices,
    feature_nms_indices,
    soft_nms_arrays,
)
from featurenms.synthetic import dense_scene


@dataclass(frozen=True)
class BenchRow:
    method: str
    boxes: int
    repeats: int
    median_seconds: float
    boxes_per_second: float
    iou_evaluations: int
    embedding_evaluations: int
    kept: int


def _runner(method: str, scene, use_grid: bool) -> Callable[[], tuple[int, int, int]]:
    props = scene.proposals
    boxes = boxes_to_array(p.box for p in props)
    scores = np.array([p.score for p in props])
    if method not in METHOD_DEFAULTS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    params = METHOD_DEFAULTS[method]
    if method == "classical":
        def run():
            keep, st = classical_nms_indices(boxes, scores, params["n"], use_grid=use_grid)
            return len(keep), st.iou_evaluations, st.embedding_evaluations
    elif method == "feature":
        emb = np.array([p.embedding.values for p in props])

        def run():
            keep, st = feature_nms_indices(
                boxes, scores, emb, params["n1"], params["n2"], params["t"], use_grid=use_grid
            )
            return len(keep), st.iou_evaluations, st.embedding_evaluations
    elif method == "adaptive":
        dens = np.array(proposal_densities(scene))

        def run():
            keep, st = adaptive_nms_indices(boxes, scores, dens, params["n"], use_grid=use_grid)
            return len(keep), st.iou_evaluations, st.embedding_evaluations
    else:
        def run():
            _, final, evals = soft_nms_arrays(boxes, scores, params["sigma"])
            return int(np.sum(final >= params["score_floor"])), evals, 0
    return run


def run_benchmark(
    methods: Sequence[str], num_boxes: int, repeats: int, seed: int, full_scan: bool = False
) -> list[BenchRow]:
    """Time each method on one dense scene; ``full_scan`` disables the grid lookup."""
    if num_boxes < 1:
        raise ValueError("num_boxes must be >= 1")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    scene = dense_scene(num_boxes, seed)
    rows = []
    for method in methods:
        run = _runner(method, scene, use_grid=not full_scan)
        run()  # compile / warm caches
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            kept, iou_evals, emb_evals = run()
            times.append(time.perf_counter() - start)
        median = statistics.median(times)
        rows.append(BenchRow(
            method=method,
            boxes=num_boxes,
            repeats=repeats,
            median_seconds=median,
            boxes_per_second=num_boxes / median if median > 0 else float("inf"),
            iou_evaluations=iou_evals,
            embedding_evaluations=emb_evals,
            kept=kept,
        ))
    return rows


def format_rows(rows: Sequence[BenchRow]) -> str:
    header = ["method", "boxes", "repeats", "median_s", "boxes_per_s", "iou_evals", "emb_evals", "kept"]
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join([
            r.method, str(r.boxes), str(r.repeats), f"{r.median_seconds:.6f}",
            f"{r.boxes_per_second:.1f}", str(r.iou_evaluations), str(r.embedding_evaluations), str(r.kept),
        ]))
    return "\n".join(lines)


def write_csv(rows: Sequence[BenchRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(BenchRow.__dataclass_fields__), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(asdict(r))
