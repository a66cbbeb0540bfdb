"""Brute-force reference predictions used to check the fast classifiers.

Plain Python loops only: no shared code with the models they check.
"""

from __future__ import annotations

import math


def _columns(rows):
    return list(zip(*rows))


def _mean(xs):
    return sum(xs) / len(xs)


def _pvar(xs):
    m = _mean(xs)
    return sum((x - m) ** 2 for x in xs) / len(xs)


def _rows_labels(data):
    if hasattr(data, "features"):
        X, y = data.features, data.labels
    else:
        X, y = data
    return [[float(v) for v in row] for row in X], [int(v) for v in y]


def naive_bayes_oracle(rows, labels, x, variance_floor=1e-6) -> int:
    """Class with the largest log prior plus summed Gaussian log densities."""
    best_label, best_score = None, -math.inf
    for c in sorted(set(labels)):
        members = [r for r, l in zip(rows, labels) if l == c]
        score = math.log(len(members) / len(rows))
        for j, col in enumerate(_columns(members)):
            mu = _mean(col)
            var = max(_pvar(col), variance_floor)
            score -= (x[j] - mu) ** 2 / (2 * var) + 0.5 * math.log(2 * math.pi * var)
        if score > best_score:
            best_label, best_score = c, score
    return best_label


def nearest_neighbors_oracle(rows, labels, x, k=5) -> int:
    """Majority label of the k closest standardized exemplars (ties: label 0)."""
    cols = _columns(rows)
    means = [_mean(c) for c in cols]
    scales = [math.sqrt(_pvar(c)) or 1.0 for c in cols]

    def z(row):
        return [(v - m) / s for v, m, s in zip(row, means, scales)]

    q = z(x)
    scored = []
    for i, row in enumerate(rows):
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(z(row), q)))
        scored.append((d, i))
    scored.sort()
    nearest = scored[:min(k, len(rows))]
    ones = sum(labels[i] for _, i in nearest)
    return 1 if 2 * ones > len(nearest) else 0


def oracle_predict(kind, data, hp, features) -> int:
    from . import AlgorithmKind, Hyperparameters
    from .models import FeatureCountError

    kind = AlgorithmKind(kind)
    hp = hp or Hyperparameters()
    rows, labels = _rows_labels(data)
    x = [float(v) for v in features]
    if len(x) != len(rows[0]):
        raise FeatureCountError(f"expected {len(rows[0])} features, got {len(x)}")
    if kind is AlgorithmKind.NAIVE_BAYES:
        return naive_bayes_oracle(rows, labels, x, hp.nb_variance_floor)
    if kind is AlgorithmKind.NEAREST_NEIGHBORS:
        return nearest_neighbors_oracle(rows, labels, x, hp.nn_k)
    raise ValueError(f"no oracle for {kind}")
