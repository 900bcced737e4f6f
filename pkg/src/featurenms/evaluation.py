"""Matching detections to ground truth and the AP / log-average miss rate metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from featurenms.geometry import boxes_to_array, iou_matrix
from featurenms.model import Detection, Scene
from featurenms.suppression import score_order

MISS_RATE_FLOOR = 1e-5
PR_CSV_HEADER = ("recall", "precision", "score_threshold")
METRIC_KEYS = ("ap_50", "ap_75", "lamr", "num_detections", "num_gt", "num_images")


def fppi_references() -> np.ndarray:
    """The nine FPPI sample points 10**(-2 + k/4), k = 0..8."""
    return np.array([10.0 ** (-2.0 + k / 4.0) for k in range(9)])


class LabeledDetection(NamedTuple):
    score: float
    is_tp: bool
    image_id: str


class PrPoint(NamedTuple):
    recall: float
    precision: float
    score_threshold: float


@dataclass(frozen=True)
class PrCurve:
    points: tuple[PrPoint, ...] = ()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(PR_CSV_HEADER)
            for pt in self.points:
                writer.writerow([repr(pt.recall), repr(pt.precision), repr(pt.score_threshold)])

    @classmethod
    def from_csv(cls, path) -> "PrCurve":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != PR_CSV_HEADER:
                raise ValueError(f"unexpected PR curve header {header}")
            return cls(tuple(PrPoint(*map(float, row)) for row in reader))


@dataclass(frozen=True)
class MetricsReport:
    ap_50: float
    ap_75: float
    lamr: float
    num_detections: int
    num_gt: int
    num_images: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def match_detections(
    scene: Scene, final_detections: Sequence[Detection], iou_threshold: float = 0.5
) -> tuple[list[LabeledDetection], int]:
    """Greedy score-descending matching; returns labels and the unmatched GT count.

    Each detection takes the highest-IoU ground truth that is still free and
    overlaps by at least ``iou_threshold``. Ties in IoU go to the earlier GT.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    num_gt = len(scene.ground_truth)
    if not final_detections:
        return [], num_gt
    scores = np.array([d.score for d in final_detections])
    ious = iou_matrix(
        boxes_to_array(d.box for d in final_detections),
        boxes_to_array(g.box for g in scene.ground_truth),
    )
    taken = np.zeros(num_gt, dtype=bool)
    labels = [None] * len(final_detections)
    for i in score_order(scores):
        candidates = np.where(taken, -1.0, ious[i])
        is_tp = False
        if num_gt:
            j = int(np.argmax(candidates))
            if candidates[j] >= iou_threshold:
                taken[j] = True
                is_tp = True
        labels[i] = LabeledDetection(float(scores[i]), is_tp, scene.image_id)
    # report in visiting order so cumulative sweeps can consume it directly
    ordered = [labels[i] for i in score_order(scores)]
    return ordered, int(num_gt - taken.sum())


def _sweep(labels: Sequence[LabeledDetection]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative (thresholds, tp, fp) at every distinct score, descending."""
    if not labels:
        empty = np.zeros(0)
        return empty, empty.astype(np.int64), empty.astype(np.int64)
    scores = np.array([l.score for l in labels], dtype=np.float64)
    tps = np.array([l.is_tp for l in labels], dtype=np.int64)
    order = score_order(scores)
    scores, tps = scores[order], tps[order]
    cum_tp = np.cumsum(tps)
    cum_fp = np.cumsum(1 - tps)
    # last index of every run of equal scores
    last = np.r_[np.nonzero(np.diff(scores))[0], len(scores) - 1]
    return scores[last], cum_tp[last], cum_fp[last]


def pr_curve(labels: Sequence[LabeledDetection], num_gt: int) -> PrCurve:
    if num_gt <= 0:
        raise ValueError("num_gt must be positive")
    thresholds, tp, fp = _sweep(labels)
    points = tuple(
        PrPoint(float(t_ / num_gt), float(t_ / (t_ + f_)), float(s))
        for s, t_, f_ in zip(thresholds, tp, fp)
    )
    return PrCurve(points)


def average_precision(curve: PrCurve) -> float:
    """All-point interpolated AP: area under the monotone precision envelope."""
    if not curve.points:
        return 0.0
    recall = np.array([p.recall for p in curve.points])
    precision = np.array([p.precision for p in curve.points])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * envelope))


def log_average_miss_rate(labels: Sequence[LabeledDetection], num_gt: int, num_images: int) -> float:
    """Geometric mean of the miss rate sampled at nine log-spaced FPPI values."""
    if num_gt <= 0 or num_images <= 0:
        raise ValueError("num_gt and num_images must be positive")
    _, tp, fp = _sweep(labels)
    fppi = fp / num_images
    miss = 1.0 - tp / num_gt
    logs = []
    for ref in fppi_references():
        ok = fppi <= ref
        mr = float(miss[ok].min()) if np.any(ok) else 1.0
        logs.append(math.log(max(mr, MISS_RATE_FLOOR)))
    return math.exp(sum(logs) / len(logs))


def compute_gt_densities(scene: Scene) -> dict[int, float]:
    """Per-object density: the largest IoU with any other GT box in the scene."""
    gts = scene.ground_truth
    if len(gts) < 2:
        return {g.object_id: 0.0 for g in gts}
    boxes = boxes_to_array(g.box for g in gts)
    ious = iou_matrix(boxes, boxes)
    np.fill_diagonal(ious, 0.0)
    return {g.object_id: float(ious[k].max()) for k, g in enumerate(gts)}


def proposal_densities(scene: Scene) -> list[float]:
    """Densities aligned with ``scene.proposals`` via their source object id."""
    per_object = compute_gt_densities(scene)
    out = []
    for i, p in enumerate(scene.proposals):
        if p.source_object_id is None:
            raise ValueError(
                f"proposal {i} of scene {scene.image_id!r} has no source_object_id; "
                "ground-truth densities need provenance"
            )
        if p.source_object_id not in per_object:
            raise ValueError(
                f"proposal {i} of scene {scene.image_id!r} references unknown object "
                f"{p.source_object_id}"
            )
        out.append(per_object[p.source_object_id])
    return out


@dataclass
class DatasetLabels:
    """Per-threshold labels aggregated over a dataset."""

    labels: list[LabeledDetection] = field(default_factory=list)
    num_gt: int = 0
    num_images: int = 0


def label_dataset(
    gt_scenes: Iterable[Scene],
    detections: Mapping[str, Sequence[Detection]],
    iou_threshold: float,
) -> DatasetLabels:
    out = DatasetLabels()
    for scene in gt_scenes:
        labels, _ = match_detections(scene, detections.get(scene.image_id, ()), iou_threshold)
        out.labels.extend(labels)
        out.num_gt += len(scene.ground_truth)
        out.num_images += 1
    return out


def evaluate(
    gt_scenes: Sequence[Scene],
    detections: Mapping[str, Sequence[Detection]],
    iou_threshold: float = 0.5,
) -> tuple[MetricsReport, PrCurve]:
    """Compute AP@0.5, AP@0.75 and log-average miss rate over a dataset.

    ``detections`` maps image ids to post-suppression detections; images
    absent from it count as having no detections. The returned PR curve is
    taken at ``iou_threshold``, which also drives the miss-rate computation.
    """
    known = {s.image_id for s in gt_scenes}
    unknown = sorted(set(detections) - known)
    if unknown:
        raise KeyError(f"detections for unknown image ids: {unknown[:5]}")
    at_main = label_dataset(gt_scenes, detections, iou_threshold)
    at_50 = at_main if iou_threshold == 0.5 else label_dataset(gt_scenes, detections, 0.5)
    at_75 = label_dataset(gt_scenes, detections, 0.75)
    num_gt = at_main.num_gt
    curve = pr_curve(at_main.labels, num_gt)
    report = MetricsReport(
        ap_50=average_precision(pr_curve(at_50.labels, num_gt)),
        ap_75=average_precision(pr_curve(at_75.labels, num_gt)),
        lamr=log_average_miss_rate(at_main.labels, num_gt, at_main.num_images),
        num_detections=len(at_main.labels),
        num_gt=num_gt,
        num_images=at_main.num_images,
    )
    return report, curve


def recall_at_lowest_threshold(curve: PrCurve) -> float:
    return curve.points[-1].recall if curve.points else 0.0
