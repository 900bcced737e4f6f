"""Seeded generator of crowded synthetic scenes.

Ground-truth objects are grouped into tight clusters whose members overlap
with IoU in ``[0.4, 0.8]`` while objects in different clusters stay below
0.4, so the share of crowded GT pairs is controlled directly. Every object
gets a unit-norm true embedding and spawns jittered, noisy proposals.
"""
from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from featurenms.geometry import BoundingBox, iou_matrix
from featurenms.model import (
    DEFAULT_EMBEDDING_DIM,
    Detection,
    Embedding,
    GroundTruthObject,
    Scene,
    normalize_embedding,
)

CROWDED_IOU = (0.4, 0.8)
MAX_CLUSTER_SIZE = 5
SCORE_JITTER_COUPLING = 0.5
# per-component std-dev separating confused objects that share a base embedding
CONFUSION_SPREAD = 0.02
# corner perturbations are truncated to this fraction of the box side
MAX_CORNER_SHIFT = 0.45

_MEMBER_TRIES = 200
_CLUSTER_TRIES = 50
_PLACEMENT_TRIES = 300
_SCENE_TRIES = 20
_EXACT_PARTITION_LIMIT = 64


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    num_scenes: int = 100
    objects_per_scene: int = 6
    canvas: tuple[float, float] = (640.0, 480.0)
    object_size_range: tuple[float, float] = (40.0, 120.0)
    crowding: float = 0.3
    proposals_per_object: int = 4
    box_jitter: float = 0.05
    score_noise: float = 0.05
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    embedding_noise: float = 0.05
    confusion_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "canvas", tuple(float(v) for v in self.canvas))
        object.__setattr__(self, "object_size_range", tuple(float(v) for v in self.object_size_range))
        if self.num_scenes < 1 or self.objects_per_scene < 1 or self.proposals_per_object < 1:
            raise ValueError("num_scenes, objects_per_scene and proposals_per_object must be >= 1")
        if len(self.canvas) != 2 or min(self.canvas) <= 0:
            raise ValueError(f"invalid canvas {self.canvas}")
        lo, hi = self.object_size_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid object_size_range {self.object_size_range}")
        if hi > min(self.canvas):
            raise ValueError("objects larger than the canvas")
        for name in ("crowding", "confusion_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("box_jitter", "score_noise", "embedding_noise"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.embedding_dim < 2:
            raise ValueError("embedding_dim must be >= 2")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], **overrides: Any) -> "GeneratorConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


def _pairs(m: int) -> int:
    return m * (m - 1) // 2


@functools.lru_cache(maxsize=None)
def _achievable_partitions(k: int, max_size: int) -> dict[int, tuple[int, ...]]:
    """Map every reachable within-group pair count to one partition of ``k``."""
    reach: list[dict[int, tuple[int, ...]]] = [{0: ()}]
    for n in range(1, k + 1):
        table: dict[int, tuple[int, ...]] = {}
        for m in range(1, min(max_size, n) + 1):
            for pairs, sizes in reach[n - m].items():
                table.setdefault(pairs + _pairs(m), sizes + (m,))
        reach.append(table)
    return reach[k]


def _greedy_partition(k: int, target: int, max_size: int) -> list[int]:
    sizes, left = [], k
    while left:
        m = min(max_size, left)
        while m > 1 and _pairs(m) > target:
            m -= 1
        sizes.append(m)
        target -= _pairs(m)
        left -= m
    return sizes


def sample_group_sizes(k: int, rate: float, max_size: int, rng: np.random.Generator) -> list[int]:
    """Partition ``k`` items into groups whose within-group pairs hit ``rate`` on average.

    Pair counts that no partition reaches exactly are hit in expectation by
    randomising between the two nearest reachable counts.
    """
    target = rate * _pairs(k)
    if k <= _EXACT_PARTITION_LIMIT:
        table = _achievable_partitions(k, max_size)
        counts = sorted(table)
        below = [c for c in counts if c <= target]
        above = [c for c in counts if c >= target]
        lo = below[-1]
        hi = above[0] if above else lo
        pick = lo
        if hi != lo and rng.random() < (target - lo) / (hi - lo):
            pick = hi
        sizes = list(table[pick])
    else:
        base = math.floor(target)
        whole = base + int(rng.random() < target - base)
        sizes = _greedy_partition(k, whole, max_size)
    rng.shuffle(sizes)
    return sizes


def max_crowding(objects_per_scene: int) -> float:
    """Largest crowded-pair fraction the cluster layout can realise."""
    if objects_per_scene < 2:
        return 0.0
    k = objects_per_scene
    if k <= _EXACT_PARTITION_LIMIT:
        best = max(_achievable_partitions(k, MAX_CLUSTER_SIZE))
    else:
        best = sum(_pairs(m) for m in _greedy_partition(k, _pairs(k), MAX_CLUSTER_SIZE))
    return best / _pairs(k)


def _in_band(values: np.ndarray) -> bool:
    return bool(np.all((values >= CROWDED_IOU[0]) & (values <= CROWDED_IOU[1])))


def _sample_cluster(m: int, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Boxes (relative to an arbitrary origin) whose pairwise IoU is in the crowded band."""
    lo, hi = cfg.object_size_range
    for _ in range(_CLUSTER_TRIES):
        w, h = rng.uniform(lo, hi, size=2)
        members = [np.array([0.0, 0.0, w, h])]
        for _ in range(m - 1):
            for _ in range(_MEMBER_TRIES):
                sw, sh = np.clip(np.array([w, h]) * rng.uniform(0.9, 1.1, size=2), lo, hi)
                dx, dy = rng.uniform(-0.35, 0.35, size=2) * np.array([w, h])
                cand = np.array([dx, dy, dx + sw, dy + sh])
                if _in_band(iou_matrix(cand[None], np.array(members))):
                    members.append(cand)
                    break
            else:
                break
        if len(members) == m:
            return np.array(members)
    raise PlacementError(f"could not build a crowded cluster of {m} objects")


def _place_objects(sizes: list[int], cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    cw, ch = cfg.canvas
    placed = np.zeros((0, 4))
    for m in sizes:
        cluster = _sample_cluster(m, cfg, rng)
        cluster[:, [0, 2]] -= cluster[:, 0].min()
        cluster[:, [1, 3]] -= cluster[:, 1].min()
        span_x, span_y = cluster[:, 2].max(), cluster[:, 3].max()
        if span_x > cw or span_y > ch:
            raise PlacementError("cluster does not fit on the canvas")
        for _ in range(_PLACEMENT_TRIES):
            shift = np.array([rng.uniform(0, cw - span_x), rng.uniform(0, ch - span_y)])
            cand = cluster + np.r_[shift, shift]
            if len(placed) == 0 or iou_matrix(cand, placed).max() < CROWDED_IOU[0]:
                placed = np.vstack([placed, cand])
                break
        else:
            raise PlacementError("no free position for cluster")
    return placed


def _true_embeddings(k: int, cfg: GeneratorConfig, rng: np.random.Generator) -> list[Embedding]:
    dim = cfg.embedding_dim
    groups = sample_group_sizes(k, cfg.confusion_rate, k, rng) if k > 1 else [1]
    owner = rng.permutation(k)
    out: list[Optional[Embedding]] = [None] * k
    pos = 0
    for size in groups:
        base = rng.standard_normal(dim)
        for idx in owner[pos:pos + size]:
            if size == 1:
                out[idx] = normalize_embedding(base)
            else:
                out[idx] = normalize_embedding(base / np.linalg.norm(base) + rng.normal(0, CONFUSION_SPREAD, dim))
        pos += size
    return out  # type: ignore[return-value]


def _jitter_box(box: np.ndarray, cfg: GeneratorConfig, rng: np.random.Generator) -> tuple[BoundingBox, float]:
    w, h = box[2] - box[0], box[3] - box[1]
    side = np.array([w, h, w, h])
    rel = np.clip(rng.normal(0.0, cfg.box_jitter, 4), -MAX_CORNER_SHIFT, MAX_CORNER_SHIFT)
    cw, ch = cfg.canvas
    moved = np.clip(box + rel * side, 0.0, [cw, ch, cw, ch])
    return BoundingBox(*moved.tolist()), float(np.sqrt(np.mean(rel ** 2)))


def _generate_scene(index: int, cfg: GeneratorConfig) -> Scene:
    rng = np.random.default_rng([cfg.seed, index])
    k = cfg.objects_per_scene
    rate = min(cfg.crowding, max_crowding(k))
    for attempt in range(_SCENE_TRIES):
        try:
            boxes = _place_objects(sample_group_sizes(k, rate, MAX_CLUSTER_SIZE, rng), cfg, rng)
            break
        except PlacementError:
            if attempt == _SCENE_TRIES - 1:
                raise PlacementError(
                    f"could not place {k} objects on canvas {cfg.canvas} after {_SCENE_TRIES} attempts"
                ) from None
    embeddings = _true_embeddings(k, cfg, rng)
    gts = [GroundTruthObject(i, BoundingBox(*boxes[i].tolist()), embeddings[i]) for i in range(k)]

    proposals = []
    for gt, box in zip(gts, boxes):
        for _ in range(cfg.proposals_per_object):
            jittered, rel = _jitter_box(box, cfg, rng)
            score = 1.0 - SCORE_JITTER_COUPLING * rel + rng.normal(0.0, cfg.score_noise)
            score = float(min(1.0, max(0.0, score)))
            if cfg.embedding_noise == 0.0:
                emb = gt.embedding
            else:
                emb = normalize_embedding(np.asarray(gt.embedding.values) + rng.normal(0.0, cfg.embedding_noise, cfg.embedding_dim))
            proposals.append(Detection(jittered, score, emb, gt.object_id))
    order = rng.permutation(len(proposals))
    return Scene(f"scene_{index:05d}", tuple(gts), tuple(proposals[i] for i in order))


def generate_dataset(cfg: GeneratorConfig) -> list[Scene]:
    if cfg.crowding > max_crowding(cfg.objects_per_scene) + 1e-12:
        warnings.warn(
            f"crowding {cfg.crowding} exceeds the maximum {max_crowding(cfg.objects_per_scene):.3f} "
            f"reachable with {cfg.objects_per_scene} objects per scene; using the maximum",
            stacklevel=2,
        )
    return [_generate_scene(i, cfg) for i in range(cfg.num_scenes)]


def perfect_proposals(scene: Scene) -> Scene:
    """Replace proposals by exact copies of the ground truth with score 1."""
    proposals = []
    for gt in scene.ground_truth:
        if gt.embedding is None:
            raise ValueError(f"object {gt.object_id} in {scene.image_id!r} has no embedding")
        proposals.append(Detection(gt.box, 1.0, gt.embedding, gt.object_id))
    return scene.with_proposals(proposals)


def dense_scene(num_boxes: int, seed: int, proposals_per_object: int = 4) -> Scene:
    """One large crowded scene with exactly ``num_boxes`` proposals, for benchmarking."""
    if num_boxes < 1:
        raise ValueError("num_boxes must be >= 1")
    k = math.ceil(num_boxes / proposals_per_object)
    # keep object density roughly constant as the scene grows
    side = max(400.0, 150.0 * math.sqrt(k))
    cfg = GeneratorConfig(
        num_scenes=1,
        objects_per_scene=k,
        canvas=(side, side),
        object_size_range=(30.0, 90.0),
        crowding=min(0.3, max_crowding(k)),
        proposals_per_object=proposals_per_object,
        seed=seed,
    )
    scene = _generate_scene(0, cfg)
    return scene.with_proposals(scene.proposals[:num_boxes])
