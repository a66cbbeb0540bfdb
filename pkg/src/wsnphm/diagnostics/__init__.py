"""Training and evaluation entry points for the six diagnosis algorithms."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from ..datagen import Dataset
from .models import (
    FeatureCountError,
    GaussianNB,
    GradientBoosting,
    LinearSVM,
    Model,
    NearestNeighbors,
    RandomForest,
    TreeFeatureSelection,
    fit_gradient_boosting,
    fit_naive_bayes,
    fit_nearest_neighbors,
    fit_random_forest,
    fit_svm,
    fit_tree_feature_selection,
)
from .oracle import oracle_predict


class AlgorithmKind(str, Enum):
    SVM = "svm"
    NAIVE_BAYES = "naive_bayes"
    RANDOM_FOREST = "random_forest"
    GRADIENT_TREE_BOOSTING = "gradient_tree_boosting"
    TREE_BASED_FEATURE_SELECTION = "tree_feature_selection"
    NEAREST_NEIGHBORS = "nearest_neighbors"

    def __str__(self):
        return self.value

    @property
    def short(self) -> str:
        return _SHORT[self]


_SHORT = {
    AlgorithmKind.SVM: "SVM",
    AlgorithmKind.NAIVE_BAYES: "NB",
    AlgorithmKind.RANDOM_FOREST: "RF",
    AlgorithmKind.GRADIENT_TREE_BOOSTING: "GTB",
    AlgorithmKind.TREE_BASED_FEATURE_SELECTION: "TBFS",
    AlgorithmKind.NEAREST_NEIGHBORS: "NN",
}


class SingleClassError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    svm_epochs: int = 50
    svm_learning_rate: float = 0.01
    svm_regularization: float = 1e-3
    nb_variance_floor: float = 1e-6
    rf_trees: int = 50
    rf_max_depth: int = 8
    rf_max_features: int | None = None  # None: floor(sqrt(feature count))
    gtb_rounds: int = 100
    gtb_shrinkage: float = 0.1
    gtb_max_depth: int = 3
    tbfs_top_k: int = 2
    nn_k: int = 5

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value is not None and not value > 0:
                raise ValueError(f"hyperparameter {name} must be positive, got {value}")
        if self.nn_k % 2 == 0:
            raise ValueError("nn_k must be odd")


def _as_arrays(data):
    if isinstance(data, Dataset):
        return data.features, data.labels
    features, labels = data
    return np.asarray(features, dtype=float), np.asarray(labels, dtype=np.int64)


def train(kind: AlgorithmKind, data, hp: Hyperparameters | None = None,
          rng: np.random.Generator | None = None) -> Model:
    """Fit one algorithm on a Dataset or an ``(X, y)`` pair."""
    kind = AlgorithmKind(kind)
    hp = hp or Hyperparameters()
    if rng is None:
        rng = np.random.default_rng()
    X, y = _as_arrays(data)
    if len(y) == 0:
        raise ValueError("training data is empty")
    if len(np.unique(y)) < 2:
        raise SingleClassError("training data must contain both labels")
    forest = dict(trees=hp.rf_trees, max_depth=hp.rf_max_depth,
                  max_features=hp.rf_max_features or "sqrt")

    if kind is AlgorithmKind.SVM:
        model = fit_svm(X, y, rng, hp.svm_epochs, hp.svm_learning_rate, hp.svm_regularization)
    elif kind is AlgorithmKind.NAIVE_BAYES:
        model = fit_naive_bayes(X, y, hp.nb_variance_floor)
    elif kind is AlgorithmKind.RANDOM_FOREST:
        model = fit_random_forest(X, y, rng, **forest)
    elif kind is AlgorithmKind.GRADIENT_TREE_BOOSTING:
        model = fit_gradient_boosting(X, y, rng, hp.gtb_rounds, hp.gtb_shrinkage, hp.gtb_max_depth)
    elif kind is AlgorithmKind.TREE_BASED_FEATURE_SELECTION:
        model = fit_tree_feature_selection(X, y, rng, hp.tbfs_top_k, **forest)
    else:
        model = fit_nearest_neighbors(X, y, hp.nn_k)
    model.metadata = {"kind": kind.value, "hyperparameters": asdict(hp)}
    return model


def predict(model: Model, features) -> int:
    return model.predict(features)


def error_rate(model: Model, instances) -> float:
    """Share of misclassified instances.

    ``instances`` may be a list of Instance, a Dataset or an InstanceBatch.
    """
    if hasattr(instances, "features") and hasattr(instances, "labels"):
        X, y = instances.features, instances.labels
    else:
        instances = list(instances)
        if not instances:
            raise ValueError("no instances to evaluate")
        X = np.array([i.features for i in instances], dtype=float)
        y = np.array([i.label for i in instances], dtype=np.int64)
    if len(y) == 0:
        raise ValueError("no instances to evaluate")
    return float((model.predict_batch(X) != y).mean())


__all__ = [
    "AlgorithmKind", "FeatureCountError", "GaussianNB", "GradientBoosting", "Hyperparameters",
    "LinearSVM", "Model", "NearestNeighbors", "RandomForest", "SingleClassError",
    "TreeFeatureSelection", "error_rate", "oracle_predict", "predict", "train",
]
