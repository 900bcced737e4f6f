"""Exit criteria, one test per criterion, each reporting a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from featurenms.bench import run_benchmark
from featurenms.cli import main
from featurenms.evaluation import (
    LabeledDetection,
    average_precision,
    evaluate,
    fppi_references,
    log_average_miss_rate,
    pr_curve,
)
from featurenms.geometry import boxes_to_array, iou, iou_matrix
from featurenms.model import embedding_distance
from featurenms.objective import AnchorSet, MarginLossParams, fit_embeddings, loss_gradient, pairs_separated, total_loss
from featurenms.pipeline import detections_by_image, suppress_dataset
from featurenms.scene_io import load_scenes, save_scenes
from featurenms.suppression import (
    ClassicalNmsConfig,
    FeatureNmsConfig,
    SoftNmsConfig,
    classical_nms,
    feature_nms,
    soft_nms,
)
from featurenms.synthetic import GeneratorConfig, generate_dataset

from conftest import random_detections, record_criterion
from oracles import brute_force_ap, finite_difference_gradient
from test_objective import E_A, E_B, near_kink, random_anchor_set
from test_suppression import pair_at_distance, strip, three_box_case

pytestmark = pytest.mark.acceptance


def _random_scenes(count, seed, max_props=50):
    rng = np.random.default_rng(seed)
    return [random_detections(rng, int(rng.integers(1, max_props + 1)), canvas=80.0) for _ in range(count)]


def _same(a, b):
    return len(a) == len(b) and all(x is y for x, y in zip(a, b))


def test_c01_reduction_equivalence():
    scenes = _random_scenes(1000, seed=2024)
    start = time.perf_counter()
    mismatches = 0
    for props in scenes:
        for x in (0.3, 0.5, 0.7):
            mismatches += not _same(feature_nms(props, FeatureNmsConfig(x, 1.0, 3.0)), classical_nms(props, ClassicalNmsConfig(x)))
        for n1, n2 in ((0.1, 0.9), (0.1, 0.5), (-0.1, 0.3), (0.5, 1.0)):
            mismatches += not _same(feature_nms(props, FeatureNmsConfig(n1, n2, 0.0)), classical_nms(props, ClassicalNmsConfig(n2)))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10.0
    record_criterion(1, ok, f"reduction equivalence on 1000 scenes, mismatches={mismatches}, {elapsed:.2f}s (< 10s)")
    assert ok


def test_c02_algorithm_traces():
    a, b, c = three_box_case()
    checks = [classical_nms([c, b, a], ClassicalNmsConfig(0.5)) == [a, c]]
    e1, e2 = pair_at_distance(1.5)
    hi = [strip(0, 100, 0.9, e1), strip(0, 95, 0.8, e2)]
    mid = [strip(0, 100, 0.9, e1), strip(0, 50, 0.8, e2)]
    low = [strip(0, 100, 0.9, e1), strip(0, 5, 0.8, e1)]
    defaults = FeatureNmsConfig()
    checks.append((defaults.n1, defaults.n2, defaults.t) == (0.1, 0.9, 1.0))
    checks.append(feature_nms(hi) == [hi[0]])
    checks.append(feature_nms(mid) == mid)
    checks.append(feature_nms(low) == low)
    ok = all(checks)
    record_criterion(2, ok, f"worked traces (classical three-box, FeatureNMS three branches): {sum(checks)}/{len(checks)}")
    assert ok


def _ap50(scenes, method, **params):
    report, curve = evaluate(scenes, detections_by_image(suppress_dataset(scenes, method, **params)))
    return report, curve


def test_c03_direction_of_effect():
    start = time.perf_counter()
    scenes = generate_dataset(GeneratorConfig(num_scenes=500, crowding=0.5, embedding_noise=0.05, confusion_rate=0.0, seed=3))
    feat, _ = _ap50(scenes, "feature", n1=0.1, n2=0.9, t=1.0)
    classical, _ = _ap50(scenes, "classical", n=0.5)
    elapsed = time.perf_counter() - start
    gap = feat.ap_50 - classical.ap_50
    ok = gap > 0.02 and elapsed < 60.0
    record_criterion(3, ok, f"AP@0.5 FeatureNMS {feat.ap_50:.4f} vs classical {classical.ap_50:.4f}, gap {gap:.4f} (> 0.02), {elapsed:.1f}s (< 60s)")
    assert ok


def test_c04_confusion_failure_mode():
    # crowding 0: IoU alone separates objects, so only confused embeddings can cost recall
    cfg = GeneratorConfig(num_scenes=500, crowding=0.0, confusion_rate=0.3, seed=4)
    scenes = generate_dataset(cfg)
    _, feat_curve = _ap50(scenes, "feature")
    _, cls_curve = _ap50(scenes, "classical")
    feat_recall, cls_recall = feat_curve.points[-1].recall, cls_curve.points[-1].recall
    ok = feat_recall < cls_recall
    record_criterion(4, ok, f"confusion 0.3: final recall FeatureNMS {feat_recall:.4f} < classical {cls_recall:.4f}")
    assert ok


def _duplicate_suppression(scenes, results):
    removed = surplus = 0
    for scene, res in zip(scenes, results):
        for gt in scene.ground_truth:
            n = sum(p.source_object_id == gt.object_id for p in scene.proposals)
            kept = sum(d.source_object_id == gt.object_id for d in res.proposals)
            surplus += n - 1
            removed += n - max(kept, 1)
    return removed / surplus


def test_c05_low_localization():
    cfg = GeneratorConfig(num_scenes=300, objects_per_scene=4, crowding=0.0, box_jitter=0.25, seed=5)
    scenes = generate_dataset(cfg)
    dup_ious = []
    for s in scenes:
        for gt in s.ground_truth:
            b = boxes_to_array(p.box for p in s.proposals if p.source_object_id == gt.object_id)
            m = iou_matrix(b, b)
            dup_ious.extend(m[np.triu_indices(len(b), 1)])
    median_iou = float(np.median(dup_ious))
    feat = _duplicate_suppression(scenes, suppress_dataset(scenes, "feature", n1=0.1))
    classical = _duplicate_suppression(scenes, suppress_dataset(scenes, "classical", n=0.5))
    ok = median_iou < 0.5 and feat >= 0.9 and classical < 0.5
    record_criterion(5, ok, f"jitter 0.25 (median duplicate IoU {median_iou:.3f}): FeatureNMS suppresses {feat:.3f} (>= 0.9), classical {classical:.3f} (< 0.5)")
    assert ok


def test_c06_loss_correctness():
    params = MarginLossParams(0.2, 1.0)
    from conftest import unit

    e = unit(4, 0)
    term = (params.beta + params.alpha) - 1.0
    exact = [
        total_loss(AnchorSet.from_embeddings([e, e], [1, 1]), params) == 0.0,
        total_loss(AnchorSet.from_embeddings([e, unit(4, 0, -1.0)], [1, 2]), params) == 0.0,
        total_loss(AnchorSet.from_embeddings([E_A, E_B], [1, 2]), params) == (term + term) / 2,
    ]
    rng = np.random.default_rng(66)
    worst = 0.0
    for _ in range(100):
        a = random_anchor_set(rng, n=8, objects=3, dim=8)
        while near_kink(a, params):
            a = random_anchor_set(rng, n=8, objects=3, dim=8)
        fd = finite_difference_gradient(lambda x: total_loss(AnchorSet(x, a.object_ids), params), a.embeddings, h=1e-5)
        g = loss_gradient(a, params)
        scale = np.linalg.norm(fd)
        err = np.linalg.norm(g - fd) / scale if scale > 0 else float(np.linalg.norm(g))
        worst = max(worst, err)
    ok = all(exact) and worst < 1e-5
    record_criterion(6, ok, f"loss examples exact {sum(exact)}/3, worst gradient relative error {worst:.2e} (< 1e-5) over 100 sets")
    assert ok


def test_c07_embedding_separability():
    params = MarginLossParams(0.2, 1.0)
    ids = np.repeat(np.arange(10), 20)
    anchors = fit_embeddings(ids, dim=32, params=params, steps=5000, rng=np.random.default_rng(7))
    loss = total_loss(anchors, params)
    diff = anchors.embeddings[:, None] - anchors.embeddings[None]
    dist = np.linalg.norm(diff, axis=-1)
    same = ids[:, None] == ids[None, :]
    off = ~np.eye(len(ids), dtype=bool)
    intra, inter = dist[same & off].max(), dist[~same].min()
    ok = loss < 1e-3 and pairs_separated(anchors, t=1.0) and intra < 0.85 and inter > 1.15
    record_criterion(7, ok, f"fit 10x20 dim 32: loss {loss:.2e} (< 1e-3), max intra {intra:.3f}, min inter {inter:.3f}, separable at T=1.0")
    assert ok


def test_c08_metric_oracles():
    rng = np.random.default_rng(88)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(0, 6))
        scores = [float(s) for s in rng.integers(0, 5, k) / 4]
        tps = [bool(t) for t in rng.integers(0, 2, k)]
        num_gt = max(1, sum(tps) + int(rng.integers(0, 3)))
        labels = [LabeledDetection(s, t, "i") for s, t in zip(scores, tps)]
        got = average_precision(pr_curve(labels, num_gt))
        expected = brute_force_ap(scores, tps, num_gt) if k else 0.0
        worst = max(worst, abs(got - expected))
    five = [LabeledDetection(0.9 - 0.01 * i, True, "i") for i in range(5)]
    lamr_ok = [
        log_average_miss_rate([], 10, 10) == 1.0,
        abs(log_average_miss_rate(five, 10, 10) - 0.5) < 1e-12,
        abs(log_average_miss_rate([LabeledDetection(0.9, True, "i")] * 10, 10, 10) - 1e-5) < 1e-17,
    ]
    refs_err = float(np.max(np.abs(fppi_references() - np.array([10 ** (-2 + k / 4) for k in range(9)]))))
    ok = worst < 1e-12 and all(lamr_ok) and refs_err <= 1e-12
    record_criterion(8, ok, f"AP vs brute force max diff {worst:.1e} (< 1e-12), LAMR cases {sum(lamr_ok)}/3, FPPI refs err {refs_err:.1e}")
    assert ok


def test_c09_soft_nms_contract():
    bad = 0
    for props in _random_scenes(300, seed=9):
        bad += len(soft_nms(props, SoftNmsConfig(0.5, 0.0))) != len(props)
    out = soft_nms([strip(0, 1, 0.9), strip(0, 1, 0.8)], SoftNmsConfig(0.5, 0.0))
    err = abs(out[1].score - 0.8 * math.exp(-2.0))
    ok = bad == 0 and err < 1e-9
    record_criterion(9, ok, f"SoftNMS cardinality violations {bad}/300, identical-box rescoring error {err:.1e} (< 1e-9)")
    assert ok


def _pipeline(tmp, tag):
    cfg = tmp / "gen.json"
    cfg.write_text(json.dumps({"num_scenes": 40, "crowding": 0.4, "confusion_rate": 0.1}))
    scenes, res, metrics = tmp / f"s{tag}.jsonl", tmp / f"r{tag}.jsonl", tmp / f"m{tag}.json"
    assert main(["gen", "--config", str(cfg), "--seed", "10", "--out", str(scenes)]) == 0
    assert main(["nms", "--method", "feature", "--in", str(scenes), "--out", str(res)]) == 0
    assert main(["eval", "--detections", str(res), "--gt", str(scenes), "--out", str(metrics),
                 "--pr-csv", str(tmp / f"pr{tag}.csv")]) == 0
    return scenes.read_bytes(), metrics.read_bytes()


def test_c10_determinism_round_trip(tmp_path):
    scenes = generate_dataset(GeneratorConfig(num_scenes=50, seed=10))
    path = tmp_path / "rt.jsonl"
    save_scenes(scenes, path)
    round_trip = load_scenes(path) == scenes
    s1, m1 = _pipeline(tmp_path, "a")
    s2, m2 = _pipeline(tmp_path, "b")
    ok = round_trip and s1 == s2 and m1 == m2
    record_criterion(10, ok, f"round trip {'identical' if round_trip else 'DIFFERENT'}, pipeline metrics JSON byte-identical: {m1 == m2}")
    assert ok


def test_c11_bench_sanity():
    rows = {r.method: r for r in run_benchmark(["classical", "feature"], 10_000, repeats=5, seed=11)}
    cls_t, feat_t = rows["classical"].median_seconds, rows["feature"].median_seconds
    ratio = feat_t / cls_t
    ok = ratio < 3.0 and cls_t < 1.0 and feat_t < 1.0
    record_criterion(11, ok, f"10k boxes: classical {cls_t * 1e3:.2f} ms, FeatureNMS {feat_t * 1e3:.2f} ms, ratio {ratio:.2f} (< 3)")
    assert ok
