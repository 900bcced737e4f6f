"""Classical NMS, FeatureNMS, Gaussian SoftNMS and AdaptiveNMS.

Every algorithm works on the proposal list of a single scene. Proposals are
visited in descending score order with ties broken by ascending input index,
so results are fully deterministic.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from featurenms import _kernels
from featurenms.geometry import boxes_to_array
from featurenms.model import Detection, EmbeddingError

# lower bound that disables the embedding branch of the kernel
_NO_BAND = math.inf


@dataclass(frozen=True)
class ClassicalNmsConfig:
    n: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.n <= 1.0:
            raise ValueError(f"IoU threshold n must lie in [0, 1], got {self.n}")


@dataclass(frozen=True)
class FeatureNmsConfig:
    """Two IoU thresholds and an embedding-distance threshold.

    ``n1`` may be negative, in which case every pair that is not an obvious
    duplicate (``iou > n2``) is decided by the embedding distance, including
    boxes that do not overlap at all.
    """

    n1: float = 0.1
    n2: float = 0.9
    t: float = 1.0

    def __post_init__(self) -> None:
        if math.isnan(self.n1) or math.isnan(self.n2) or math.isnan(self.t):
            raise ValueError("thresholds must not be NaN")
        if not self.n1 < self.n2:
            raise ValueError(f"need n1 < n2, got n1={self.n1}, n2={self.n2}")
        if self.n2 > 1.0:
            raise ValueError(f"n2 must be <= 1, got {self.n2}")
        if self.t < 0.0:
            raise ValueError(f"t must be >= 0, got {self.t}")


@dataclass(frozen=True)
class SoftNmsConfig:
    sigma: float = 0.5
    score_floor: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.score_floor >= 0.0:
            raise ValueError(f"score_floor must be >= 0, got {self.score_floor}")


@dataclass(frozen=True)
class AdaptiveNmsConfig:
    densities: tuple[float, ...]
    n: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "densities", tuple(float(d) for d in self.densities))
        if not 0.0 <= self.n <= 1.0:
            raise ValueError(f"IoU threshold n must lie in [0, 1], got {self.n}")
        for d in self.densities:
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"densities must lie in [0, 1], got {d}")


class SuppressionStats(NamedTuple):
    iou_evaluations: int
    embedding_evaluations: int


def score_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; equal scores keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable").astype(np.int64)


def _embedding_array(proposals: Sequence[Detection]) -> np.ndarray:
    if not proposals:
        return np.zeros((0, 1))
    dims = set()
    for i, p in enumerate(proposals):
        if p.embedding is None:
            raise EmbeddingError(f"proposal {i} has no embedding")
        dims.add(p.embedding.dim)
    if len(dims) != 1:
        raise EmbeddingError(f"proposals mix embedding dimensions {sorted(dims)}")
    return np.array([p.embedding.values for p in proposals], dtype=np.float64)


def greedy_keep_indices(
    boxes: np.ndarray,
    scores: np.ndarray,
    upper: np.ndarray,
    lower: float = _NO_BAND,
    embeddings: Optional[np.ndarray] = None,
    t: float = 0.0,
    use_grid: bool = True,
) -> tuple[np.ndarray, SuppressionStats]:
    """Array-level greedy suppression shared by the three greedy variants.

    ``upper`` is the per-box IoU threshold applied when that box is the kept
    one; pairs with ``lower < iou <= upper`` fall back to the embedding test.
    When ``lower >= 0`` a uniform grid restricts the scan to kept boxes that
    can overlap the proposal; ``use_grid=False`` forces the full scan. Both
    give identical keep lists, only the evaluation counters differ.
    """
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    if embeddings is None:
        embeddings = np.zeros((n, 1))
    embeddings = np.ascontiguousarray(embeddings, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    # IoU-0 pairs can only be duplicates through a negative lower bound
    kernel = _kernels.greedy_keep_grid if lower >= 0.0 and use_grid else _kernels.greedy_keep
    keep, iou_evals, emb_evals = kernel(
        boxes, score_order(scores), embeddings, upper, float(lower), float(t)
    )
    return keep, SuppressionStats(int(iou_evals), int(emb_evals))


def classical_nms_indices(boxes, scores, n: float = 0.5, use_grid: bool = True):
    upper = np.full(len(scores), float(n))
    return greedy_keep_indices(boxes, scores, upper, use_grid=use_grid)


def feature_nms_indices(
    boxes, scores, embeddings, n1: float = 0.1, n2: float = 0.9, t: float = 1.0, use_grid: bool = True
):
    upper = np.full(len(scores), float(n2))
    return greedy_keep_indices(boxes, scores, upper, lower=n1, embeddings=embeddings, t=t, use_grid=use_grid)


def adaptive_nms_indices(boxes, scores, densities, n: float = 0.5, use_grid: bool = True):
    upper = np.maximum(float(n), np.asarray(densities, dtype=np.float64))
    return greedy_keep_indices(boxes, scores, upper, use_grid=use_grid)


def _arrays(proposals: Sequence[Detection]) -> tuple[np.ndarray, np.ndarray]:
    boxes = boxes_to_array(p.box for p in proposals)
    scores = np.array([p.score for p in proposals], dtype=np.float64)
    return boxes, scores


def classical_nms(
    proposals: Sequence[Detection], cfg: Optional[ClassicalNmsConfig] = None
) -> list[Detection]:
    """Keep a proposal iff its IoU with every already-kept detection is <= n."""
    cfg = cfg or ClassicalNmsConfig()
    boxes, scores = _arrays(proposals)
    keep, _ = classical_nms_indices(boxes, scores, cfg.n)
    return [proposals[i] for i in keep]


def feature_nms(
    proposals: Sequence[Detection], cfg: Optional[FeatureNmsConfig] = None
) -> list[Detection]:
    """Greedy suppression that consults embeddings in the ambiguous IoU band.

    Against each kept detection ``d``: ``iou > n2`` marks a duplicate; otherwise
    ``iou > n1`` together with an embedding distance ``< t`` marks a duplicate.
    """
    cfg = cfg or FeatureNmsConfig()
    embeddings = _embedding_array(proposals)
    boxes, scores = _arrays(proposals)
    keep, _ = feature_nms_indices(boxes, scores, embeddings, cfg.n1, cfg.n2, cfg.t)
    return [proposals[i] for i in keep]


def adaptive_nms(proposals: Sequence[Detection], cfg: AdaptiveNmsConfig) -> list[Detection]:
    """Classical NMS whose threshold against kept ``d`` is ``max(n, density(d))``."""
    if len(cfg.densities) != len(proposals):
        raise ValueError(
            f"got {len(cfg.densities)} densities for {len(proposals)} proposals"
        )
    boxes, scores = _arrays(proposals)
    keep, _ = adaptive_nms_indices(boxes, scores, cfg.densities, cfg.n)
    return [proposals[i] for i in keep]


def soft_nms_arrays(boxes, scores, sigma: float = 0.5):
    """Return (selection order, final scores, IoU evaluation count)."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    selected, final, evals = _kernels.gaussian_soft_nms(boxes, scores, float(sigma))
    return selected, final, int(evals)


def soft_nms(proposals: Sequence[Detection], cfg: Optional[SoftNmsConfig] = None) -> list[Detection]:
    """Gaussian SoftNMS.

    Each selection multiplies the remaining scores by ``exp(-iou**2 / sigma)``.
    Outputs re-scored below ``score_floor`` are dropped at the end; with a
    floor of 0 nothing is removed.
    """
    cfg = cfg or SoftNmsConfig()
    boxes, scores = _arrays(proposals)
    selected, final, _ = soft_nms_arrays(boxes, scores, cfg.sigma)
    out = []
    for idx, score in zip(selected, final):
        if score < cfg.score_floor:
            continue
        p = proposals[idx]
        out.append(p if score == p.score else dataclasses.replace(p, score=float(score)))
    return out
