import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from featurenms.geometry import BoundingBox
from featurenms.model import Detection, normalize_embedding


def random_detections(rng, n, dim=8, canvas=100.0, unique_scores=False):
    """Random proposals with heavy overlap; scores may tie unless asked otherwise."""
    out = []
    for _ in range(n):
        x, y = rng.uniform(0, canvas, 2)
        w, h = rng.uniform(5, 40, 2)
        score = rng.uniform() if unique_scores else float(rng.integers(0, 20)) / 20
        out.append(Detection(BoundingBox(x, y, x + w, y + h), score, normalize_embedding(rng.standard_normal(dim))))
    return out


def unit(dim, axis, sign=1.0):
    v = np.zeros(dim)
    v[axis] = sign
    return normalize_embedding(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
