"""Detections, embeddings and scenes shared by every other module."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from featurenms.geometry import BoundingBox

DEFAULT_EMBEDDING_DIM = 32
UNIT_NORM_TOLERANCE = 1e-6


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class Embedding:
    """Unit-norm feature vector, stored as a tuple of floats."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise EmbeddingError("embedding must have at least one component")
        if not all(math.isfinite(v) for v in values):
            raise EmbeddingError("embedding contains non-finite values")
        norm = math.sqrt(math.fsum(v * v for v in values))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise EmbeddingError(f"embedding must be unit norm, got norm {norm!r}")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def normalize_embedding(raw: Sequence[float]) -> Embedding:
    arr = np.asarray(raw, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmbeddingError("cannot normalize an empty vector")
    if not np.all(np.isfinite(arr)):
        raise EmbeddingError("cannot normalize a vector with non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise EmbeddingError("cannot normalize the zero vector")
    return Embedding(tuple((arr / norm).tolist()))


def embedding_distance(a: Embedding, b: Embedding) -> float:
    """Euclidean distance between two embeddings of equal dimension."""
    if a.dim != b.dim:
        raise EmbeddingError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return math.sqrt(math.fsum((x - y) ** 2 for x, y in zip(a.values, b.values)))


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float
    embedding: Optional[Embedding] = None
    source_object_id: Optional[int] = None

    def __post_init__(self) -> None:
        score = self.score
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
            raise ValueError(f"score must be a finite number, got {score!r}")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {score!r}")
        object.__setattr__(self, "score", float(score))


@dataclass(frozen=True)
class GroundTruthObject:
    object_id: int
    box: BoundingBox
    embedding: Optional[Embedding] = None


@dataclass(frozen=True)
class Scene:
    image_id: str
    ground_truth: tuple[GroundTruthObject, ...] = field(default_factory=tuple)
    proposals: tuple[Detection, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        object.__setattr__(self, "proposals", tuple(self.proposals))
        ids = [g.object_id for g in self.ground_truth]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids in scene {self.image_id!r}")

    def with_proposals(self, proposals: Sequence[Detection]) -> "Scene":
        return Scene(self.image_id, self.ground_truth, tuple(proposals))


def embedding_dimension(scenes: Sequence[Scene]) -> Optional[int]:
    """Return the single embedding dimension used across ``scenes``.

    Raises :class:`EmbeddingError` when dimensions are mixed; returns ``None``
    when no embeddings are present at all.
    """
    dims = set()
    for scene in scenes:
        for g in scene.ground_truth:
            if g.embedding is not None:
                dims.add(g.embedding.dim)
        for p in scene.proposals:
            if p.embedding is not None:
                dims.add(p.embedding.dim)
    if len(dims) > 1:
        raise EmbeddingError(f"mixed embedding dimensions {sorted(dims)}")
    return dims.pop() if dims else None
