"""Margin loss over anchor embeddings, its gradient, and a toy optimizer.

Positive pairs (same object) are pulled within ``beta - alpha`` of each other
and negative pairs are pushed beyond ``beta + alpha``. The loss is averaged
over all ordered pairs ``(i, j)`` with ``i != j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from featurenms.model import Embedding, EmbeddingError, embedding_distance

DEFAULT_PAIR_CAP = 5000


@dataclass(frozen=True)
class MarginLossParams:
    alpha: float = 0.2
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < self.beta):
            raise ValueError(f"need 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if self.beta + self.alpha > 2.0:
            raise ValueError("beta + alpha must be <= 2 for unit-norm embeddings")

    @property
    def positive_margin(self) -> float:
        return self.beta - self.alpha

    @property
    def negative_margin(self) -> float:
        return self.beta + self.alpha


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """Embeddings of the anchors assigned to ground truth, with their object ids.

    ``embeddings`` is a raw ``(n, dim)`` array; unit norm is expected for
    real use but not enforced so that the loss can be differentiated freely.
    """

    embeddings: np.ndarray
    object_ids: np.ndarray

    def __post_init__(self) -> None:
        emb = np.asarray(self.embeddings, dtype=np.float64)
        ids = np.asarray(self.object_ids, dtype=np.int64).ravel()
        if emb.ndim != 2:
            raise ValueError(f"embeddings must be 2-d, got shape {emb.shape}")
        if emb.shape[0] != ids.shape[0]:
            raise ValueError(f"{emb.shape[0]} embeddings but {ids.shape[0]} object ids")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "object_ids", ids)

    @classmethod
    def from_embeddings(cls, embeddings: Sequence[Embedding], object_ids: Sequence[int]) -> "AnchorSet":
        return cls(np.array([e.values for e in embeddings]), np.asarray(object_ids))

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def pairwise_loss(fi: Embedding, fj: Embedding, same_object: bool, params: MarginLossParams) -> float:
    d = embedding_distance(fi, fj)
    if same_object:
        return max(0.0, d - params.positive_margin)
    return max(0.0, params.negative_margin - d)


def _distances(emb: np.ndarray) -> np.ndarray:
    diff = emb[:, None, :] - emb[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _loss_matrix(anchors: AnchorSet, params: MarginLossParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dist = _distances(anchors.embeddings)
    same = anchors.object_ids[:, None] == anchors.object_ids[None, :]
    loss = np.where(
        same,
        np.maximum(0.0, dist - params.positive_margin),
        np.maximum(0.0, params.negative_margin - dist),
    )
    np.fill_diagonal(loss, 0.0)
    return loss, dist, same


def total_loss(
    anchors: AnchorSet,
    params: Optional[MarginLossParams] = None,
    pairs: Optional[Sequence[tuple[int, int]]] = None,
) -> float:
    """Mean pairwise loss over ordered pairs.

    With ``pairs`` given (e.g. from :func:`sample_pairs`) the mean is taken
    over that subset instead of all ``n * (n - 1)`` ordered pairs.
    """
    params = params or MarginLossParams()
    n = len(anchors)
    if n < 2:
        raise ValueError(f"need at least 2 anchors, got {n}")
    loss, _, _ = _loss_matrix(anchors, params)
    if pairs is not None:
        if len(pairs) == 0:
            raise ValueError("empty pair list")
        idx = np.asarray(pairs, dtype=np.int64)
        return float(loss[idx[:, 0], idx[:, 1]].mean())
    return float(loss.sum() / (n * (n - 1)))


def all_ordered_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def sample_pairs(
    all_pairs: Sequence[tuple[int, int]],
    cap: int = DEFAULT_PAIR_CAP,
    rng: Optional[np.random.Generator] = None,
) -> list[tuple[int, int]]:
    """Uniformly subsample ``all_pairs`` without replacement when above ``cap``."""
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    if len(all_pairs) <= cap:
        return list(all_pairs)
    rng = rng if rng is not None else np.random.default_rng(0)
    chosen = np.sort(rng.choice(len(all_pairs), size=cap, replace=False))
    return [all_pairs[i] for i in chosen]


def loss_gradient(anchors: AnchorSet, params: Optional[MarginLossParams] = None) -> np.ndarray:
    """Gradient of :func:`total_loss` with respect to every raw embedding.

    Hinge kinks and coincident embeddings use the zero subgradient.
    """
    params = params or MarginLossParams()
    n = len(anchors)
    if n < 2:
        raise ValueError(f"need at least 2 anchors, got {n}")
    emb = anchors.embeddings
    _, dist, same = _loss_matrix(anchors, params)
    # +1 pulls i toward j (active positive), -1 pushes away (active negative)
    pull = (dist > params.positive_margin).astype(np.float64)
    push = (dist < params.negative_margin).astype(np.float64)
    sign = np.where(same, pull, -push)
    np.fill_diagonal(sign, 0.0)
    safe = dist > 0.0
    coef = np.where(safe, sign / np.where(safe, dist, 1.0), 0.0)
    # both (i, j) and (j, i) contribute the same term to anchor i
    grad = coef.sum(axis=1)[:, None] * emb - coef @ emb
    return 2.0 * grad / (n * (n - 1))


def _project(emb: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    return emb / norms


def fit_embeddings(
    object_ids: Sequence[int],
    dim: int = 32,
    params: Optional[MarginLossParams] = None,
    steps: int = 2000,
    step_size: float = 50.0,
    rng: Optional[np.random.Generator] = None,
) -> AnchorSet:
    """Projected gradient descent on the unit hypersphere.

    Embeddings start as normalised isotropic Gaussian draws. The default
    ``step_size`` is large because the loss is a mean over ``n * (n - 1)``
    pairs, which shrinks per-anchor gradients accordingly.
    """
    params = params or MarginLossParams()
    ids = np.asarray(object_ids, dtype=np.int64)
    if len(np.unique(ids)) < 2:
        raise ValueError("need at least 2 distinct object ids")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    rng = rng if rng is not None else np.random.default_rng(0)
    emb = _project(rng.standard_normal((len(ids), dim)))
    for _ in range(steps):
        grad = loss_gradient(AnchorSet(emb, ids), params)
        if not np.any(grad):
            break
        emb = _project(emb - step_size * grad)
    return AnchorSet(emb, ids)


def pairs_separated(anchors: AnchorSet, t: float = 1.0) -> bool:
    """True when every same-object distance is < t and every other is > t."""
    dist = _distances(anchors.embeddings)
    same = anchors.object_ids[:, None] == anchors.object_ids[None, :]
    off = ~np.eye(len(anchors), dtype=bool)
    return bool(np.all(dist[same & off] < t) and np.all(dist[~same] > t))


__all__ = [
    "AnchorSet",
    "EmbeddingError",
    "MarginLossParams",
    "all_ordered_pairs",
    "fit_embeddings",
    "loss_gradient",
    "pairs_separated",
    "pairwise_loss",
    "sample_pairs",
    "total_loss",
]
