"""JSON Lines scene files.

One scene per line::

    {"image_id": "...",
     "ground_truth": [{"object_id": 0, "box": [x1, y1, x2, y2], "embedding": [...]}],
     "proposals": [{"box": [...], "score": 0.9, "embedding": [...], "source_object_id": 0}]}

``embedding`` and ``source_object_id`` are optional. Result files use the same
layout with ``proposals`` holding the post-suppression detections.
"""
from __future__ import annotations

import json
import os
from typing import Any, Iterable, Iterator, Optional

from featurenms.geometry import BoundingBox
from featurenms.model import Detection, Embedding, GroundTruthObject, Scene


class SceneFormatError(ValueError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}: {field}: {message}")
        self.line = line
        self.field = field


def _box_list(box: BoundingBox) -> list[float]:
    return [box.x1, box.y1, box.x2, box.y2]


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    gts = []
    for g in scene.ground_truth:
        item: dict[str, Any] = {"object_id": g.object_id, "box": _box_list(g.box)}
        if g.embedding is not None:
            item["embedding"] = list(g.embedding.values)
        gts.append(item)
    props = []
    for p in scene.proposals:
        item = {"box": _box_list(p.box), "score": p.score}
        if p.embedding is not None:
            item["embedding"] = list(p.embedding.values)
        if p.source_object_id is not None:
            item["source_object_id"] = p.source_object_id
        props.append(item)
    return {"image_id": scene.image_id, "ground_truth": gts, "proposals": props}


class _Parser:
    def __init__(self, line: int, expected_dim: Optional[int]):
        self.line = line
        self.dim = expected_dim

    def fail(self, field: str, message: str) -> SceneFormatError:
        return SceneFormatError(self.line, field, message)

    def require(self, obj: dict, key: str, where: str) -> Any:
        if not isinstance(obj, dict):
            raise self.fail(where, "expected an object")
        if key not in obj:
            raise self.fail(f"{where}.{key}" if where else key, "missing")
        return obj[key]

    def box(self, value: Any, where: str) -> BoundingBox:
        if not isinstance(value, list) or len(value) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise self.fail(where, "expected [x1, y1, x2, y2]")
        try:
            return BoundingBox(*value)
        except ValueError as exc:
            raise self.fail(where, str(exc)) from None

    def embedding(self, value: Any, where: str) -> Embedding:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise self.fail(where, "expected a list of numbers")
        if self.dim is None:
            self.dim = len(value)
        elif len(value) != self.dim:
            raise self.fail(where, f"embedding dimension {len(value)} differs from {self.dim}")
        try:
            return Embedding(tuple(value))
        except ValueError as exc:
            raise self.fail(where, str(exc)) from None

    def integer(self, value: Any, where: str) -> int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise self.fail(where, "expected an integer")
        return value

    def scene(self, data: Any) -> Scene:
        image_id = self.require(data, "image_id", "")
        if not isinstance(image_id, str) or not image_id:
            raise self.fail("image_id", "expected a non-empty string")
        gts = []
        raw_gts = self.require(data, "ground_truth", "")
        if not isinstance(raw_gts, list):
            raise self.fail("ground_truth", "expected a list")
        for i, g in enumerate(raw_gts):
            where = f"ground_truth[{i}]"
            oid = self.integer(self.require(g, "object_id", where), f"{where}.object_id")
            box = self.box(self.require(g, "box", where), f"{where}.box")
            emb = self.embedding(g["embedding"], f"{where}.embedding") if g.get("embedding") is not None else None
            gts.append(GroundTruthObject(oid, box, emb))
        props = []
        raw_props = self.require(data, "proposals", "")
        if not isinstance(raw_props, list):
            raise self.fail("proposals", "expected a list")
        for i, p in enumerate(raw_props):
            where = f"proposals[{i}]"
            box = self.box(self.require(p, "box", where), f"{where}.box")
            score = self.require(p, "score", where)
            emb = self.embedding(p["embedding"], f"{where}.embedding") if p.get("embedding") is not None else None
            src = p.get("source_object_id")
            if src is not None:
                src = self.integer(src, f"{where}.source_object_id")
            try:
                props.append(Detection(box, score, emb, src))
            except ValueError as exc:
                raise self.fail(f"{where}.score", str(exc)) from None
        try:
            return Scene(image_id, tuple(gts), tuple(props))
        except ValueError as exc:
            raise self.fail("ground_truth", str(exc)) from None


def iter_scenes(path: str | os.PathLike) -> Iterator[Scene]:
    """Yield scenes lazily, validating each line and the shared embedding dimension."""
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SceneFormatError(lineno, "<json>", exc.msg) from None
            parser = _Parser(lineno, dim)
            scene = parser.scene(data)
            dim = parser.dim
            yield scene


def load_scenes(path: str | os.PathLike) -> list[Scene]:
    scenes = list(iter_scenes(path))
    seen = set()
    for lineno, s in enumerate(scenes, start=1):
        if s.image_id in seen:
            raise SceneFormatError(lineno, "image_id", f"duplicate image id {s.image_id!r}")
        seen.add(s.image_id)
    return scenes


def dumps_scene(scene: Scene) -> str:
    # repr-based float output round-trips exactly
    return json.dumps(scene_to_dict(scene), separators=(",", ":"))


def save_scenes(scenes: Iterable[Scene], path: str | os.PathLike) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for scene in scenes:
            fh.write(dumps_scene(scene))
            fh.write("\n")
    os.replace(tmp, path)
