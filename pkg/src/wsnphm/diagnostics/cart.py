"""Weighted CART trees (Gini classification and squared-error regression).

Rows are presorted once per feature; each node keeps its members in that
order, so split search is a cumulative sum instead of a sort.  Candidate
thresholds are midpoints between consecutive distinct values.  Among equally
good splits the lowest feature index wins, then the lowest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GINI = "gini"
SQUARED_ERROR = "squared_error"


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class-1 weight fraction (gini) or mean target (regression)
    weight: np.ndarray
    gain: np.ndarray  # weighted impurity decrease at each split node
    n_features: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, feat, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        return (self.predict_value(X) > 0.5).astype(np.int64)

    def feature_importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        inner = self.feature >= 0
        np.add.at(imp, self.feature[inner], self.gain[inner])
        return imp


def _impurity(criterion, w, wy, wyy):
    """Weighted impurity total for a node with summed weights/targets."""
    if criterion == GINI:
        p = np.divide(wy, w, out=np.zeros_like(wy, dtype=float), where=w > 0)
        return w * 2.0 * p * (1.0 - p)
    return wyy - np.divide(wy * wy, w, out=np.zeros_like(wy, dtype=float), where=w > 0)


def _best_split(X, y, w, orders, features, criterion, parent):
    best = None  # (impurity, feature, threshold, position)
    for f in features:
        idx = orders[f]
        xs = X[idx, f]
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        ws = w[idx]
        cw = np.cumsum(ws)
        cy = np.cumsum(ws * y[idx])
        cyy = np.cumsum(ws * y[idx] ** 2) if criterion == SQUARED_ERROR else cy
        tw, ty, tyy = cw[-1], cy[-1], cyy[-1]
        pos = np.flatnonzero(distinct)
        left = _impurity(criterion, cw[pos], cy[pos], cyy[pos])
        right = _impurity(criterion, tw - cw[pos], ty - cy[pos], tyy - cyy[pos])
        total = left + right
        j = int(total.argmin())  # first minimum: lowest threshold
        if best is None or total[j] < best[0]:
            p = pos[j]
            best = (float(total[j]), int(f), 0.5 * (xs[p] + xs[p + 1]), p)
    if best is None or not best[0] < parent - 1e-12 * max(1.0, abs(parent)):
        return None
    return best


def grow_tree(X, y, weights=None, *, criterion=GINI, max_depth=8, max_features=None,
              rng: np.random.Generator | None = None, min_samples_split=2) -> Tree:
    """Grow one tree; ``weights`` are per-row multiplicities (bootstrap counts)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    live = np.flatnonzero(w > 0)
    root_orders = [live[np.argsort(X[live, f], kind="stable")] for f in range(d)]
    k = d if max_features is None else max(1, min(d, int(max_features)))

    feature, threshold, left, right, value, weight, gain = [], [], [], [], [], [], []

    def new_node():
        for arr in (feature, left, right):
            arr.append(-1)
        threshold.append(0.0)
        value.append(0.0)
        weight.append(0.0)
        gain.append(0.0)
        return len(feature) - 1

    in_left = np.zeros(n, dtype=bool)
    stack = [(new_node(), root_orders, 0)]
    while stack:
        node, orders, depth = stack.pop()
        idx = orders[0]
        ws = w[idx]
        tw = ws.sum()
        ty = float((ws * y[idx]).sum())
        tyy = float((ws * y[idx] ** 2).sum())
        weight[node] = tw
        value[node] = ty / tw if tw > 0 else 0.0
        parent = float(_impurity(criterion, np.array([tw]), np.array([ty]), np.array([tyy]))[0])
        if depth >= max_depth or len(idx) < min_samples_split or parent <= 0.0:
            continue
        if k < d:
            features = np.sort(rng.choice(d, size=k, replace=False))
        else:
            features = range(d)
        split = _best_split(X, y, w, orders, features, criterion, parent)
        if split is None:
            continue
        imp, f, thr, _ = split
        feature[node], threshold[node], gain[node] = f, thr, parent - imp
        in_left[idx] = X[idx, f] <= thr
        left_orders = [o[in_left[o]] for o in orders]
        right_orders = [o[~in_left[o]] for o in orders]
        in_left[idx] = False
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], right_orders, depth + 1))
        stack.append((left[node], left_orders, depth + 1))

    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(weight),
                np.array(gain), d)


class Forest:
    """Several trees evaluated together for speed."""

    def __init__(self, trees: list[Tree]):
        self.trees = trees
        offsets = np.cumsum([0] + [t.node_count for t in trees[:-1]])
        self.roots = offsets.astype(np.int64)
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
        self.value = np.concatenate([t.value for t in trees])

    def tree_values(self, X) -> np.ndarray:
        """Leaf values, shape (n_trees, n_rows)."""
        X = np.asarray(X, dtype=float)
        n = len(X)
        node = np.repeat(self.roots[:, None], n, axis=1)
        cols = np.broadcast_to(np.arange(n), node.shape)
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            go_left = X[cols, np.where(inner, feat, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
