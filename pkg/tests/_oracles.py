"""Independent reference implementations used to verify the package.

Everything here is deliberately written the slow, obvious way (plain loops,
exhaustive sorts, pairwise counting) and imports nothing from speechscreen,
so agreement between the two is meaningful evidence of correctness.
"""

from __future__ import annotations

import math

import numpy as np


def mean_oracle(values) -> float:
    """Compensated-summation mean."""
    return math.fsum(float(v) for v in values) / len(values)


def column_mean_oracle(matrix) -> list[float]:
    """Per-column compensated mean of a T x D matrix."""
    rows = [list(map(float, row)) for row in matrix]
    t = len(rows)
    d = len(rows[0])
    return [math.fsum(rows[i][j] for i in range(t)) / t for j in range(d)]


def std_oracle(values) -> float:
    """Two-pass population standard deviation."""
    mu = mean_oracle(values)
    var = math.fsum((float(v) - mu) ** 2 for v in values) / len(values)
    return math.sqrt(var)


def sq_dist_oracle(a, b) -> float:
    """Squared Euclidean distance by plain sequential float64 summation."""
    total = np.float64(0.0)
    for x, y in zip(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)):
        diff = x - y
        total = total + diff * diff
    return float(total)


def knn_oracle(keys, ranks, query, k) -> list[int]:
    """Exhaustive top-k: full sort by (squared distance, insertion rank).

    Returns row indices into ``keys``.  ``ranks`` carries each row's
    insertion rank for tie-breaking.
    """
    scored = [
        (sq_dist_oracle(key, query), rank, row)
        for row, (key, rank) in enumerate(zip(keys, ranks))
    ]
    scored.sort(key=lambda item: (item[0], item[1]))
    return [row for _, _, row in scored[:k]]


def silhouette_oracle(points, assignments) -> float:
    """O(T^2) silhouette: direct double loop over frames.

    Euclidean (not squared) distances; frames in singleton clusters score 0,
    as do frames with a = b = 0.
    """
    pts = [np.asarray(p, dtype=np.float64) for p in points]
    assign = list(assignments)
    t = len(pts)
    clusters = sorted(set(assign))
    scores = []
    for i in range(t):
        own = assign[i]
        own_size = sum(1 for c in assign if c == own)
        if own_size <= 1:
            scores.append(0.0)
            continue
        a_total = 0.0
        for j in range(t):
            if j != i and assign[j] == own:
                a_total += math.dist(pts[i], pts[j])
        a = a_total / (own_size - 1)
        b = math.inf
        for other in clusters:
            if other == own:
                continue
            members = [j for j in range(t) if assign[j] == other]
            if not members:
                continue
            mean_d = math.fsum(math.dist(pts[i], pts[j]) for j in members) / len(members)
            b = min(b, mean_d)
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return math.fsum(scores) / t


def inertia_oracle(points, assignments, centroids) -> float:
    """Sum of squared distances from each point to its assigned centroid."""
    total = 0.0
    for point, c in zip(points, assignments):
        total += sq_dist_oracle(point, centroids[c])
    return total


def auc_pair_oracle(scores, labels) -> float:
    """O(n^2) Mann-Whitney AUC: count pairs directly, half credit for ties."""
    pos = [float(s) for s, l in zip(scores, labels) if l == 1]
    neg = [float(s) for s, l in zip(scores, labels) if l == 0]
    credit = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                credit += 1.0
            elif p == q:
                credit += 0.5
    return credit / (len(pos) * len(neg))


def confusion_oracle(scores, labels, threshold):
    """Direct TP/FP/TN/FN counting; undefined rates come back as None."""
    tp = fp = tn = fn = 0
    for s, l in zip(scores, labels):
        predicted = float(s) > threshold
        if l == 1 and predicted:
            tp += 1
        elif l == 1:
            fn += 1
        elif predicted:
            fp += 1
        else:
            tn += 1
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    specificity = tn / (tn + fp) if (tn + fp) > 0 else None
    return sensitivity, specificity


def knn_label_proportion_oracle(train_keys, train_labels, query, k) -> float:
    """Plain kNN classifier score: fraction of label-1 among the k nearest."""
    ranks = list(range(len(train_keys)))
    top = knn_oracle(train_keys, ranks, query, k)
    return sum(train_labels[row] for row in top) / k
