"""The six diagnosis classifiers.

Every model exposes ``predict_batch(X)`` over rows of ``feature_count``
columns and ``predict(x)`` for a single vector.  Labels are 0 (area normal)
and 1 (area failure).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cart import GINI, SQUARED_ERROR, Forest, grow_tree


class FeatureCountError(ValueError):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        std = X.std(0)
        return cls(X.mean(0), np.where(std > 0, std, 1.0))

    def __call__(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class Model:
    feature_count: int
    metadata: dict = field(default_factory=dict)

    kind = None

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise FeatureCountError(
                f"{self.kind} model expects {self.feature_count} features, got {X.shape[1]}")
        return X

    def predict(self, features) -> int:
        features = np.asarray(features, dtype=float)
        if features.ndim != 1:
            raise FeatureCountError("predict takes a single feature vector")
        return int(self.predict_batch(features[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        return self._predict(self._check(X))

    def _predict(self, X) -> np.ndarray:
        raise NotImplementedError


# --- linear SVM ---------------------------------------------------------------

@dataclass
class LinearSVM(Model):
    weights: np.ndarray = None
    bias: float = 0.0
    scaler: Standardizer = None
    objective_history: list = field(default_factory=list)

    kind = "svm"

    def decision_function(self, X) -> np.ndarray:
        return self.scaler(self._check(X)) @ self.weights + self.bias

    def _predict(self, X):
        return (self.scaler(X) @ self.weights + self.bias > 0).astype(np.int64)


def hinge_objective(weights, bias, Z, y_pm, reg) -> float:
    """Mean hinge loss plus ``reg/2 * |w|^2`` on standardized inputs."""
    margins = y_pm * (Z @ weights + bias)
    return float(np.maximum(0.0, 1.0 - margins).mean() + 0.5 * reg * weights @ weights)


def fit_svm(X, y, rng, epochs=50, learning_rate=0.01, regularization=1e-3) -> LinearSVM:
    """Stochastic subgradient descent; step ``learning_rate / sqrt(epoch)``."""
    scaler = Standardizer.fit(X)
    Z = scaler(X)
    y_pm = np.where(np.asarray(y) == 1, 1.0, -1.0)
    n, d = Z.shape
    w = [0.0] * d
    b = 0.0
    rows = Z.tolist()
    ys = y_pm.tolist()
    history = []
    for epoch in range(1, epochs + 1):
        eta = learning_rate / math.sqrt(epoch)
        shrink = 1.0 - eta * regularization
        for i in rng.permutation(n).tolist():
            x = rows[i]
            yi = ys[i]
            margin = yi * (sum(wj * xj for wj, xj in zip(w, x)) + b)
            if margin < 1.0:
                w = [shrink * wj + eta * yi * xj for wj, xj in zip(w, x)]
                b += eta * yi
            else:
                w = [shrink * wj for wj in w]
        history.append(hinge_objective(np.array(w), b, Z, y_pm, regularization))
    model = LinearSVM(d, weights=np.array(w), bias=b, scaler=scaler, objective_history=history)
    return model


# --- Gaussian naive Bayes -----------------------------------------------------

@dataclass
class GaussianNB(Model):
    classes: np.ndarray = None
    means: np.ndarray = None  # (class, feature)
    variances: np.ndarray = None
    log_priors: np.ndarray = None

    kind = "naive_bayes"

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = []
        for c in range(len(self.classes)):
            var = self.variances[c]
            ll = -0.5 * (np.log(2 * np.pi * var) + (X - self.means[c]) ** 2 / var).sum(1)
            out.append(self.log_priors[c] + ll)
        return np.column_stack(out)

    def _predict(self, X):
        jll = self.joint_log_likelihood(X)
        # argmax takes the first maximum, so ties go to the lower label
        return self.classes[jll.argmax(1)]


def fit_naive_bayes(X, y, variance_floor=1e-6) -> GaussianNB:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    means = np.array([X[y == c].mean(0) for c in classes])
    variances = np.array([np.maximum(X[y == c].var(0), variance_floor) for c in classes])
    priors = np.array([(y == c).mean() for c in classes])
    return GaussianNB(X.shape[1], classes=classes, means=means, variances=variances,
                      log_priors=np.log(priors))


# --- tree ensembles -----------------------------------------------------------

@dataclass
class RandomForest(Model):
    forest: Forest = None

    kind = "random_forest"

    @property
    def trees(self):
        return self.forest.trees

    def vote_fraction(self, X) -> np.ndarray:
        votes = self.forest.tree_values(self._check(X)) > 0.5
        return votes.mean(0)

    def _predict(self, X):
        votes = (self.forest.tree_values(X) > 0.5).mean(0)
        return (votes > 0.5).astype(np.int64)

    def feature_importance(self) -> np.ndarray:
        """Mean impurity decrease, each tree normalised to sum to one."""
        total = np.zeros(self.feature_count)
        for tree in self.trees:
            imp = tree.feature_importance()
            if imp.sum() > 0:
                total += imp / imp.sum()
        return total / len(self.trees)


def sqrt_features(d: int) -> int:
    return max(1, int(math.sqrt(d)))


def fit_random_forest(X, y, rng, trees=50, max_depth=8, max_features="sqrt",
                      bootstrap=True) -> RandomForest:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if max_features == "sqrt":
        max_features = sqrt_features(d)
    grown = []
    for _ in range(trees):
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n) if bootstrap else None
        grown.append(grow_tree(X, y, weights, criterion=GINI, max_depth=max_depth,
                               max_features=max_features, rng=rng))
    return RandomForest(d, forest=Forest(grown))


@dataclass
class GradientBoosting(Model):
    init: float = 0.0
    shrinkage: float = 0.1
    forest: Forest = None
    loss_history: list = field(default_factory=list)

    kind = "gradient_tree_boosting"

    def raw_score(self, X) -> np.ndarray:
        X = self._check(X)
        return self.init + self.shrinkage * self.forest.tree_values(X).sum(0)

    def _predict(self, X):
        score = self.init + self.shrinkage * self.forest.tree_values(X).sum(0)
        return (score > 0).astype(np.int64)


def logistic_loss(y, score) -> float:
    # log(1 + exp(-s)) for y=1 and log(1 + exp(s)) for y=0
    s = np.where(np.asarray(y) == 1, -score, score)
    return float(np.logaddexp(0.0, s).mean())


def fit_gradient_boosting(X, y, rng, rounds=100, shrinkage=0.1, max_depth=3) -> GradientBoosting:
    """Each round fits a squared-error tree to the logistic-loss residuals."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = y.mean()
    init = float(np.log(p / (1 - p)))
    score = np.full(len(y), init)
    trees = []
    history = [logistic_loss(y, score)]
    for _ in range(rounds):
        residual = y - 1.0 / (1.0 + np.exp(-score))
        tree = grow_tree(X, residual, criterion=SQUARED_ERROR, max_depth=max_depth)
        trees.append(tree)
        score = score + shrinkage * tree.predict_value(X)
        history.append(logistic_loss(y, score))
    return GradientBoosting(X.shape[1], init=init, shrinkage=shrinkage, forest=Forest(trees),
                            loss_history=history)


@dataclass
class TreeFeatureSelection(Model):
    selected: np.ndarray = None
    importance: np.ndarray = None
    inner: RandomForest = None

    kind = "tree_feature_selection"

    def _predict(self, X):
        return self.inner.predict_batch(X[:, self.selected])


def fit_tree_feature_selection(X, y, rng, top_k=2, **forest_kwargs) -> TreeFeatureSelection:
    X = np.asarray(X, dtype=float)
    ranking_forest = fit_random_forest(X, y, rng, **forest_kwargs)
    importance = ranking_forest.feature_importance()
    k = max(1, min(top_k, X.shape[1]))
    # stable sort on -importance keeps the lower index first on ties
    selected = np.sort(np.argsort(-importance, kind="stable")[:k])
    inner = fit_random_forest(X[:, selected], y, rng, **forest_kwargs)
    return TreeFeatureSelection(X.shape[1], selected=selected, importance=importance, inner=inner)


# --- nearest neighbours -------------------------------------------------------

@dataclass
class NearestNeighbors(Model):
    k: int = 5
    exemplars: np.ndarray = None  # standardized
    labels: np.ndarray = None
    scaler: Standardizer = None
    _index: cKDTree = None

    kind = "nearest_neighbors"

    def __post_init__(self):
        if self._index is None and self.exemplars is not None:
            self._index = cKDTree(self.exemplars)

    def _predict(self, X):
        Z = self.scaler(X)
        k = min(self.k, len(self.labels))
        _, idx = self._index.query(Z, k=k)
        idx = np.asarray(idx).reshape(len(Z), k)
        ones = self.labels[idx].sum(1)
        # majority of k; an exact tie goes to label 0
        return (2 * ones > k).astype(np.int64)


def fit_nearest_neighbors(X, y, k=5) -> NearestNeighbors:
    scaler = Standardizer.fit(X)
    return NearestNeighbors(np.asarray(X).shape[1], k=k, exemplars=scaler(X),
                            labels=np.asarray(y, dtype=np.int64), scaler=scaler)
