"""Compiled inner loops for the greedy suppression algorithms.

The Python wrappers in :mod:`featurenms.suppression` own validation and
sorting; these functions assume clean float64/int64 arrays.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _pair_iou(boxes, i, j):
    w = min(boxes[i, 2], boxes[j, 2]) - max(boxes[i, 0], boxes[j, 0])
    if w <= 0.0:
        return 0.0
    h = min(boxes[i, 3], boxes[j, 3]) - max(boxes[i, 1], boxes[j, 1])
    if h <= 0.0:
        return 0.0
    inter = w * h
    area_i = (boxes[i, 2] - boxes[i, 0]) * (boxes[i, 3] - boxes[i, 1])
    area_j = (boxes[j, 2] - boxes[j, 0]) * (boxes[j, 3] - boxes[j, 1])
    return inter / (area_i + area_j - inter)


@njit(cache=True, inline="always")
def _pair_distance(emb, i, j):
    acc = 0.0
    for k in range(emb.shape[1]):
        diff = emb[i, k] - emb[j, k]
        acc += diff * diff
    return math.sqrt(acc)


@njit(cache=True)
def greedy_keep(boxes, order, emb, upper, lower, t):
    """Greedy duplicate removal over ``order``.

    A proposal ``p`` is a duplicate of a kept detection ``d`` when
    ``iou > upper[d]``, or when ``lower < iou <= upper[d]`` and the embedding
    distance is ``< t``. Returns kept indices (in visiting order) and the
    number of IoU and embedding-distance evaluations performed.
    """
    n = order.shape[0]
    keep = np.empty(n, dtype=np.int64)
    n_keep = 0
    iou_evals = 0
    emb_evals = 0
    for oi in range(n):
        p = order[oi]
        duplicate = False
        for k in range(n_keep):
            d = keep[k]
            iou_evals += 1
            v = _pair_iou(boxes, p, d)
            if v > upper[d]:
                duplicate = True
                break
            if v > lower:
                emb_evals += 1
                if _pair_distance(emb, p, d) < t:
                    duplicate = True
                    break
        if not duplicate:
            keep[n_keep] = p
            n_keep += 1
    return keep[:n_keep], iou_evals, emb_evals


@njit(cache=True)
def gaussian_soft_nms(boxes, scores, sigma):
    """Gaussian score decay; returns selection order, final scores, IoU evaluations."""
    n = scores.shape[0]
    current = scores.copy()
    alive = np.ones(n, dtype=np.bool_)
    selected = np.empty(n, dtype=np.int64)
    final = np.empty(n, dtype=np.float64)
    iou_evals = 0
    for it in range(n):
        best = -1
        best_score = -np.inf
        for i in range(n):
            # strict comparison keeps the lowest index on ties
            if alive[i] and current[i] > best_score:
                best = i
                best_score = current[i]
        alive[best] = False
        selected[it] = best
        final[it] = current[best]
        for i in range(n):
            if alive[i]:
                iou_evals += 1
                v = _pair_iou(boxes, best, i)
                if v > 0.0:
                    current[i] *= math.exp(-(v * v) / sigma)
    return selected, final, iou_evals


@njit(cache=True)
def greedy_keep_grid(boxes, order, emb, upper, lower, t):
    """Same result as :func:`greedy_keep`, visiting only kept boxes that share a grid cell.

    Only valid when non-overlapping pairs can never be duplicates, i.e.
    ``lower >= 0``; boxes with positive overlap always share a cell.
    """
    n = order.shape[0]
    keep = np.empty(n, dtype=np.int64)
    if n == 0:
        return keep, 0, 0
    min_x = boxes[:, 0].min()
    min_y = boxes[:, 1].min()
    span_x = boxes[:, 2].max() - min_x
    span_y = boxes[:, 3].max() - min_y
    sides = np.empty(n)
    for i in range(n):
        sides[i] = max(boxes[i, 2] - boxes[i, 0], boxes[i, 3] - boxes[i, 1])
    cell = np.median(sides)
    # bound the grid so huge spans with tiny boxes cannot exhaust memory
    cell = max(cell, span_x / 2048.0, span_y / 2048.0)
    gx = int(span_x / cell) + 1
    gy = int(span_y / cell) + 1

    cx0 = np.empty(n, dtype=np.int64)
    cx1 = np.empty(n, dtype=np.int64)
    cy0 = np.empty(n, dtype=np.int64)
    cy1 = np.empty(n, dtype=np.int64)
    capacity = 0
    for i in range(n):
        cx0[i] = min(int((boxes[i, 0] - min_x) / cell), gx - 1)
        cx1[i] = min(int((boxes[i, 2] - min_x) / cell), gx - 1)
        cy0[i] = min(int((boxes[i, 1] - min_y) / cell), gy - 1)
        cy1[i] = min(int((boxes[i, 3] - min_y) / cell), gy - 1)
        capacity += (cx1[i] - cx0[i] + 1) * (cy1[i] - cy0[i] + 1)

    head = np.full(gx * gy, -1, dtype=np.int64)
    next_entry = np.empty(capacity, dtype=np.int64)
    entry_box = np.empty(capacity, dtype=np.int64)
    n_entries = 0
    seen = np.full(n, -1, dtype=np.int64)

    n_keep = 0
    iou_evals = 0
    emb_evals = 0
    for oi in range(n):
        p = order[oi]
        duplicate = False
        for cy in range(cy0[p], cy1[p] + 1):
            if duplicate:
                break
            for cx in range(cx0[p], cx1[p] + 1):
                if duplicate:
                    break
                e = head[cy * gx + cx]
                while e != -1:
                    d = entry_box[e]
                    e = next_entry[e]
                    if seen[d] == p:
                        continue
                    seen[d] = p
                    iou_evals += 1
                    v = _pair_iou(boxes, p, d)
                    if v > upper[d]:
                        duplicate = True
                        break
                    if v > lower:
                        emb_evals += 1
                        if _pair_distance(emb, p, d) < t:
                            duplicate = True
                            break
        if not duplicate:
            keep[n_keep] = p
            n_keep += 1
            for cy in range(cy0[p], cy1[p] + 1):
                for cx in range(cx0[p], cx1[p] + 1):
                    c = cy * gx + cx
                    entry_box[n_entries] = p
                    next_entry[n_entries] = head[c]
                    head[c] = n_entries
                    n_entries += 1
    return keep[:n_keep], iou_evals, emb_evals
