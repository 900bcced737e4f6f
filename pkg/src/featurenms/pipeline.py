"""Method dispatch shared by the CLI, the benchmark and the comparison report."""
from __future__ import annotations

from typing import Any, Sequence

from featurenms.evaluation import proposal_densities
from featurenms.model import Detection, Scene
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

METHODS = ("classical", "feature", "soft", "adaptive")

# library defaults except the SoftNMS floor, which follows common evaluation practice
METHOD_DEFAULTS: dict[str, dict[str, float]] = {
    "classical": {"n": 0.5},
    "feature": {"n1": 0.1, "n2": 0.9, "t": 1.0},
    "soft": {"sigma": 0.5, "score_floor": 0.001},
    "adaptive": {"n": 0.5},
}

# the configurations compared side by side in the report
REPORT_VARIANTS: tuple[tuple[str, str, dict[str, float]], ...] = (
    ("feature_0.1_0.9", "feature", {"n1": 0.1, "n2": 0.9, "t": 1.0}),
    ("feature_0.0_1.0", "feature", {"n1": 0.0, "n2": 1.0, "t": 1.0}),
    ("feature_-eps_1.0", "feature", {"n1": -1e-9, "n2": 1.0, "t": 1.0}),
    ("adaptive", "adaptive", {"n": 0.5}),
    ("soft", "soft", {"sigma": 0.5, "score_floor": 0.001}),
    ("classical", "classical", {"n": 0.5}),
)


def resolve_params(method: str, **overrides: Any) -> dict[str, float]:
    if method not in METHOD_DEFAULTS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    params = dict(METHOD_DEFAULTS[method])
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in params:
            raise ValueError(f"parameter {key!r} does not apply to method {method!r}")
        params[key] = float(value)
    return params


def suppress_scene(scene: Scene, method: str, params: dict[str, float]) -> list[Detection]:
    if method == "classical":
        return classical_nms(scene.proposals, ClassicalNmsConfig(**params))
    if method == "feature":
        return feature_nms(scene.proposals, FeatureNmsConfig(**params))
    if method == "soft":
        return soft_nms(scene.proposals, SoftNmsConfig(**params))
    if method == "adaptive":
        return adaptive_nms(scene.proposals, AdaptiveNmsConfig(proposal_densities(scene), **params))
    raise ValueError(f"unknown method {method!r}")


def suppress_dataset(scenes: Sequence[Scene], method: str, **overrides: Any) -> list[Scene]:
    """Apply one method to every scene; returned scenes carry the kept detections."""
    params = resolve_params(method, **overrides)
    return [s.with_proposals(suppress_scene(s, method, params)) for s in scenes]


def detections_by_image(results: Sequence[Scene]) -> dict[str, list[Detection]]:
    return {s.image_id: list(s.proposals) for s in results}

