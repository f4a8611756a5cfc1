"""
Built-in target models.

Three small numpy classifiers serve as attack targets and SHAP subjects:
multinomial logistic regression, a CART decision tree and a one-vs-rest linear
SVM. Each is a :class:`Predictor` and serializes its parameters to plain JSON.
"""

import time
from typing import Any, Dict, Optional, Tuple

import numpy as np

from evade_lite.domain.entities import ProcessedDataset
from evade_lite.domain.interfaces import Predictor, accuracy
from evade_lite.schemas import TrainConfig
from evade_lite.utils.exceptions import TrainingError
from evade_lite.utils.logging import PerformanceLogger, get_logger

logger = get_logger(__name__)
perf_logger = PerformanceLogger("training")

__all__ = [
    "LogisticModel",
    "DecisionTreeModel",
    "LinearSVMModel",
    "softmax",
    "train_logistic",
    "train_tree",
    "train_linear_svm",
    "accuracy",
]


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _check_training_set(train: ProcessedDataset, kind: str) -> None:
    if len(train) == 0:
        raise TrainingError("Training set is empty", model_kind=kind)
    if len(np.unique(train.labels)) < 2:
        raise TrainingError("Training set contains a single class", model_kind=kind)


class LogisticModel(Predictor):
    """Multinomial softmax regression."""

    kind = "logistic"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, name: str = ""):
        weights = np.asarray(weights, dtype=float)
        super().__init__(weights.shape[0], weights.shape[1], name)
        self.weights = weights
        self.bias = np.asarray(bias, dtype=float)

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return softmax(matrix @ self.weights + self.bias)

    def parameters(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_parameters(cls, parameters: Dict[str, Any], name: str = "") -> "LogisticModel":
        return cls(np.array(parameters["weights"]), np.array(parameters["bias"]), name)


class DecisionTreeModel(Predictor):
    """
    CART classifier.

    Nodes are nested dicts: internal nodes ``{feature, threshold, left, right}``
    send rows with ``value <= threshold`` left; leaves hold ``leaf_probs``.
    """

    kind = "tree"

    def __init__(self, root: Dict[str, Any], n_features: int, n_classes: int, name: str = ""):
        super().__init__(n_features, n_classes, name)
        self.root = root

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        out = np.empty((matrix.shape[0], self.n_classes))
        self._route(self.root, matrix, np.arange(matrix.shape[0]), out)
        return out

    def _route(self, node: Dict[str, Any], matrix: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
        if rows.size == 0:
            return
        if "leaf_probs" in node:
            out[rows] = node["leaf_probs"]
            return
        go_left = matrix[rows, node["feature"]] <= node["threshold"]
        self._route(node["left"], matrix, rows[go_left], out)
        self._route(node["right"], matrix, rows[~go_left], out)

    @property
    def depth(self) -> int:
        def walk(node: Dict[str, Any]) -> int:
            if "leaf_probs" in node:
                return 0
            return 1 + max(walk(node["left"]), walk(node["right"]))

        return walk(self.root)

    def parameters(self) -> Dict[str, Any]:
        return {"root": self.root}

    @classmethod
    def from_parameters(
        cls, parameters: Dict[str, Any], n_features: int, n_classes: int, name: str = ""
    ) -> "DecisionTreeModel":
        return cls(parameters["root"], n_features, n_classes, name)


class LinearSVMModel(Predictor):
    """One-vs-rest linear SVM; probabilities are the softmax of per-class margins."""

    kind = "linear_svm"

    def __init__(self, weights: np.ndarray, bias: np.ndarray, name: str = ""):
        weights = np.asarray(weights, dtype=float)
        super().__init__(weights.shape[0], weights.shape[1], name)
        self.weights = weights
        self.bias = np.asarray(bias, dtype=float)

    def margins(self, matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix, dtype=float) @ self.weights + self.bias

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return softmax(self.margins(matrix))

    def parameters(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_parameters(cls, parameters: Dict[str, Any], name: str = "") -> "LinearSVMModel":
        return cls(np.array(parameters["weights"]), np.array(parameters["bias"]), name)


def train_logistic(
    train: ProcessedDataset, cfg: Optional[TrainConfig] = None, name: str = ""
) -> LogisticModel:
    """
    Fit softmax regression by full-batch gradient descent.

    Raises:
        TrainingError: Empty or single-class training set
    """
    cfg = cfg or TrainConfig()
    _check_training_set(train, LogisticModel.kind)
    started = time.time()

    X, y = train.matrix, train.labels
    n, M = X.shape
    C = train.n_classes
    onehot = np.eye(C)[y]
    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(0.0, 0.01, size=(M, C))
    b = np.zeros(C)

    for _ in range(cfg.epochs):
        residual = softmax(X @ W + b) - onehot
        W -= cfg.learning_rate * (X.T @ residual / n + cfg.regularization * W)
        b -= cfg.learning_rate * residual.mean(axis=0)

    model = LogisticModel(W, b, name=name)
    perf_logger.log_operation_time(
        "train_logistic", time.time() - started, {"rows": n, "epochs": cfg.epochs}
    )
    return model


def _gini(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    shares = np.divide(counts, totals, out=np.zeros_like(counts, dtype=float), where=totals > 0)
    return 1.0 - (shares**2).sum(axis=-1)


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int) -> Optional[Tuple[int, float]]:
    """
    Lowest weighted Gini split over all features and midpoint thresholds.

    Zero-gain splits are accepted; ties go to the lower feature index and then
    the lower threshold.
    """
    n = len(y)
    totals = np.bincount(y, minlength=n_classes).astype(float)
    best: Optional[Tuple[int, float]] = None
    best_impurity = np.inf

    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind="stable")
        values = X[order, feature]
        cut = np.nonzero(values[:-1] < values[1:])[0]
        if cut.size == 0:
            continue
        left_counts = np.cumsum(np.eye(n_classes)[y[order]], axis=0)[cut]
        right_counts = totals - left_counts
        n_left = (cut + 1).astype(float)
        impurity = (n_left * _gini(left_counts) + (n - n_left) * _gini(right_counts)) / n
        i = int(np.argmin(impurity))
        if impurity[i] < best_impurity:
            best_impurity = float(impurity[i])
            best = (feature, float((values[cut[i]] + values[cut[i] + 1]) / 2))
    return best


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, depth: int, max_depth: int) -> Dict[str, Any]:
    counts = np.bincount(y, minlength=n_classes)
    leaf = {"leaf_probs": (counts / counts.sum()).tolist()}
    if depth >= max_depth or counts.max() == len(y):
        return leaf
    split = _best_split(X, y, n_classes)
    if split is None:
        return leaf
    feature, threshold = split
    go_left = X[:, feature] <= threshold
    return {
        "feature": feature,
        "threshold": threshold,
        "left": _grow(X[go_left], y[go_left], n_classes, depth + 1, max_depth),
        "right": _grow(X[~go_left], y[~go_left], n_classes, depth + 1, max_depth),
    }


def train_tree(
    train: ProcessedDataset, cfg: Optional[TrainConfig] = None, name: str = ""
) -> DecisionTreeModel:
    """
    Grow a CART tree with Gini impurity up to ``cfg.max_depth``.

    Leaf probabilities are the class frequencies of the rows reaching the leaf.
    """
    cfg = cfg or TrainConfig()
    _check_training_set(train, DecisionTreeModel.kind)
    started = time.time()
    root = _grow(train.matrix, train.labels, train.n_classes, 0, cfg.max_depth)
    model = DecisionTreeModel(root, train.n_features, train.n_classes, name=name)
    perf_logger.log_operation_time(
        "train_tree", time.time() - started, {"rows": len(train), "depth": model.depth}
    )
    return model


def train_linear_svm(
    train: ProcessedDataset, cfg: Optional[TrainConfig] = None, name: str = ""
) -> LinearSVMModel:
    """
    Fit one hinge-loss classifier per class (class vs rest) by sub-gradient descent.
    """
    cfg = cfg or TrainConfig()
    _check_training_set(train, LinearSVMModel.kind)
    started = time.time()

    X = train.matrix
    n, M = X.shape
    C = train.n_classes
    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(0.0, 0.01, size=(M, C))
    b = np.zeros(C)
    signs = np.where(np.eye(C)[train.labels] > 0, 1.0, -1.0)

    for _ in range(cfg.epochs):
        margins = signs * (X @ W + b)
        active = (margins < 1.0) * signs
        W -= cfg.learning_rate * (cfg.regularization * W - X.T @ active / n)
        b -= cfg.learning_rate * (-active.mean(axis=0))

    model = LinearSVMModel(W, b, name=name)
    perf_logger.log_operation_time(
        "train_linear_svm", time.time() - started, {"rows": n, "epochs": cfg.epochs}
    )
    return model


TRAINERS = {
    LogisticModel.kind: train_logistic,
    DecisionTreeModel.kind: train_tree,
    LinearSVMModel.kind: train_linear_svm,
}


def train_model(
    kind: str, train: ProcessedDataset, cfg: Optional[TrainConfig] = None, name: str = ""
) -> Predictor:
    """Dispatch to the trainer of a built-in model kind."""
    if kind not in TRAINERS:
        raise TrainingError(f"Unknown model kind: {kind}", model_kind=kind)
    model = TRAINERS[kind](train, cfg, name=name)
    logger.info("Model trained", kind=kind, name=model.name, rows=len(train))
    return model
