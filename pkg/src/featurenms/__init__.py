"""Duplicate suppression for object detection with learned feature embeddings."""
from featurenms.geometry import BoundingBox, area, iou
from featurenms.model import (
    Detection,
    Embedding,
    GroundTruthObject,
    Scene,
    embedding_distance,
    normalize_embedding,
)
from featurenms.suppression import (
    AdaptiveNmsConfig,
    ClassicalNmsConfig,
    FeatureNmsConfig,
    SoftNmsConfig,
    adaptive_nms,
    classical_nms,
    feature_nms,
    soft_nms,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveNmsConfig",
    "BoundingBox",
    "ClassicalNmsConfig",
    "Detection",
    "Embedding",
    "FeatureNmsConfig",
    "GroundTruthObject",
    "Scene",
    "SoftNmsConfig",
    "adaptive_nms",
    "area",
    "classical_nms",
    "embedding_distance",
    "feature_nms",
    "iou",
    "normalize_embedding",
    "soft_nms",
]
