import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featurenms.model import normalize_embedding
from featurenms.objective import (
    AnchorSet,
    MarginLossParams,
    all_ordered_pairs,
    fit_embeddings,
    loss_gradient,
    pairs_separated,
    pairwise_loss,
    sample_pairs,
    total_loss,
)

from conftest import unit
from oracles import finite_difference_gradient

PARAMS = MarginLossParams(alpha=0.2, beta=1.0)
# two 4-d unit vectors exactly 1.0 apart
E_A = normalize_embedding([1.0, 0.0, 0.0, 0.0])
E_B = normalize_embedding([0.5, 0.5, 0.5, 0.5])


def brute_total_loss(emb, ids, params):
    n = len(ids)
    acc = 0.0
    for i, j in itertools.permutations(range(n), 2):
        d = float(np.linalg.norm(emb[i] - emb[j]))
        if ids[i] == ids[j]:
            acc += max(0.0, d - (params.beta - params.alpha))
        else:
            acc += max(0.0, (params.beta + params.alpha) - d)
    return acc / (n * (n - 1))


def random_anchor_set(rng, n=8, objects=3, dim=8):
    ids = np.concatenate([np.arange(objects), rng.integers(0, objects, n - objects)])
    emb = rng.standard_normal((n, dim))
    return AnchorSet(emb / np.linalg.norm(emb, axis=1, keepdims=True), ids)


def near_kink(anchors, params, eps=1e-3):
    diff = anchors.embeddings[:, None] - anchors.embeddings[None]
    dist = np.linalg.norm(diff, axis=-1)[~np.eye(len(anchors), dtype=bool)]
    return bool(np.any(np.abs(dist - params.positive_margin) < eps) or np.any(np.abs(dist - params.negative_margin) < eps))


def test_params_validation():
    with pytest.raises(ValueError):
        MarginLossParams(alpha=1.0, beta=1.0)
    with pytest.raises(ValueError):
        MarginLossParams(alpha=0.6, beta=1.5)


def test_pairwise_examples():
    assert E_A.values != E_B.values
    d08 = normalize_embedding([1.0, 0.0]), normalize_embedding([1 - 0.32, np.sqrt(1 - 0.68**2)])
    assert pairwise_loss(*d08, True, PARAMS) == pytest.approx(0.0, abs=1e-12)
    assert pairwise_loss(E_A, E_B, True, PARAMS) == 1.0 - (PARAMS.beta - PARAMS.alpha)
    assert pairwise_loss(E_A, E_B, True, PARAMS) == pytest.approx(0.2, abs=1e-15)
    assert pairwise_loss(E_A, E_B, False, PARAMS) == (PARAMS.beta + PARAMS.alpha) - 1.0
    assert pairwise_loss(E_A, E_B, False, PARAMS) == pytest.approx(0.2, abs=1e-15)


def test_total_loss_examples():
    e = unit(4, 0)
    assert total_loss(AnchorSet.from_embeddings([e, e], [7, 7]), PARAMS) == 0.0
    assert total_loss(AnchorSet.from_embeddings([e, unit(4, 0, -1.0)], [1, 2]), PARAMS) == 0.0
    value = total_loss(AnchorSet.from_embeddings([E_A, E_B], [1, 2]), PARAMS)
    term = (PARAMS.beta + PARAMS.alpha) - 1.0
    assert value == (term + term) / 2
    assert value == pytest.approx(0.2, abs=1e-15)


def test_total_loss_needs_two_anchors():
    with pytest.raises(ValueError):
        total_loss(AnchorSet.from_embeddings([unit(4, 0)], [0]))


def test_total_loss_matches_brute_force(rng):
    for _ in range(20):
        a = random_anchor_set(rng, n=10, objects=4, dim=6)
        assert total_loss(a, PARAMS) == pytest.approx(brute_total_loss(a.embeddings, a.object_ids, PARAMS), abs=1e-14)


def test_total_loss_on_sampled_pairs(rng):
    a = random_anchor_set(rng)
    pairs = all_ordered_pairs(len(a))
    assert total_loss(a, PARAMS, pairs) == pytest.approx(total_loss(a, PARAMS), abs=1e-15)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_loss_symmetries(seed):
    rng = np.random.default_rng(seed)
    a = random_anchor_set(rng, n=9, objects=3, dim=5)
    base = total_loss(a, PARAMS)
    assert base >= 0.0
    perm = rng.permutation(len(a))
    assert total_loss(AnchorSet(a.embeddings[perm], a.object_ids[perm]), PARAMS) == pytest.approx(base, abs=1e-14)
    relabel = {0: 42, 1: -3, 2: 7}
    ids = np.array([relabel[i] for i in a.object_ids])
    assert total_loss(AnchorSet(a.embeddings, ids), PARAMS) == pytest.approx(base, abs=1e-14)


def test_zero_loss_iff_margins_satisfied():
    ok = AnchorSet.from_embeddings([unit(3, 0), unit(3, 0), unit(3, 1)], [0, 0, 1])
    assert total_loss(ok) == 0.0
    bad = AnchorSet.from_embeddings([unit(3, 0), unit(3, 1), unit(3, 2)], [0, 0, 1])
    assert total_loss(bad) > 0.0


@pytest.mark.parametrize("count, expected", [(100, 100), (5000, 5000), (12000, 5000)])
def test_sample_pairs_counts(count, expected):
    pairs = [(i, i + 1) for i in range(count)]
    out = sample_pairs(pairs, 5000, np.random.default_rng(0))
    assert len(out) == expected
    assert len(set(out)) == expected
    assert set(out) <= set(pairs)
    if count <= 5000:
        assert out == pairs


def test_sample_pairs_deterministic_and_validated():
    pairs = [(i, 0) for i in range(12000)]
    assert sample_pairs(pairs, 5000, np.random.default_rng(3)) == sample_pairs(pairs, 5000, np.random.default_rng(3))
    with pytest.raises(ValueError):
        sample_pairs(pairs, 0)


def test_sample_pairs_is_uniform():
    pairs = [(i, 0) for i in range(100)]
    hits = np.zeros(100)
    rng = np.random.default_rng(1)
    for _ in range(2000):
        for i, _ in sample_pairs(pairs, 10, rng):
            hits[i] += 1
    # each pair expected 200 times; loose 5-sigma band
    assert np.all(np.abs(hits - 200) < 5 * np.sqrt(200 * 0.9))


def test_gradient_zero_when_loss_zero():
    a = AnchorSet.from_embeddings([unit(3, 0), unit(3, 0), unit(3, 1), unit(3, 1, -1)], [0, 0, 1, 2])
    assert total_loss(a) == 0.0
    assert not np.any(loss_gradient(a))


def test_gradient_direction_for_positive_pair():
    a = AnchorSet.from_embeddings([unit(3, 0), unit(3, 1)], [0, 0])
    g = loss_gradient(a)
    diff = a.embeddings[0] - a.embeddings[1]
    cos = g[0] @ diff / (np.linalg.norm(g[0]) * np.linalg.norm(diff))
    assert cos == pytest.approx(1.0, abs=1e-12)


def test_gradient_coincident_points_zero():
    a = AnchorSet.from_embeddings([unit(3, 0), unit(3, 0)], [0, 1])
    assert not np.any(loss_gradient(a))


def test_gradient_matches_finite_differences(rng):
    a = random_anchor_set(rng)
    while near_kink(a, PARAMS):
        a = random_anchor_set(rng)
    fd = finite_difference_gradient(lambda x: total_loss(AnchorSet(x, a.object_ids), PARAMS), a.embeddings)
    g = loss_gradient(a, PARAMS)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-12)


def test_fit_two_objects():
    a = fit_embeddings([0, 1], dim=32, params=PARAMS, steps=2000, rng=np.random.default_rng(5))
    assert total_loss(a, PARAMS) < 1e-6
    assert np.allclose(np.linalg.norm(a.embeddings, axis=1), 1.0, atol=1e-12)


def test_fit_zero_steps_returns_init():
    a = fit_embeddings([0, 1, 1], dim=4, steps=0, rng=np.random.default_rng(9))
    raw = np.random.default_rng(9).standard_normal((3, 4))
    assert np.allclose(a.embeddings, raw / np.linalg.norm(raw, axis=1, keepdims=True))


def test_fit_deterministic():
    ids = np.repeat(np.arange(4), 3)
    a = fit_embeddings(ids, 8, steps=50, rng=np.random.default_rng(2))
    b = fit_embeddings(ids, 8, steps=50, rng=np.random.default_rng(2))
    assert np.array_equal(a.embeddings, b.embeddings)


def test_fit_validation():
    with pytest.raises(ValueError):
        fit_embeddings([1, 1], 8)
    with pytest.raises(ValueError):
        fit_embeddings([0, 1], 1)


def test_separated_after_convergence():
    ids = np.repeat(np.arange(5), 4)
    a = fit_embeddings(ids, 16, params=PARAMS, steps=3000, rng=np.random.default_rng(4))
    assert total_loss(a, PARAMS) < 1e-6
    assert pairs_separated(a, t=PARAMS.beta)
