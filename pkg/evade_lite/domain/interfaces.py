"""
Black-box predictor contract.

Every target model, local or remote, is used through :class:`Predictor`: class
predictions and per-class probability scores only, with a query counter that
advances by the number of rows passed to each prediction call.
"""

import threading
from abc import ABC, abstractmethod
from typing import Any, Dict, Sequence

import numpy as np

from evade_lite.utils.exceptions import ValidationError
from evade_lite.utils.validation import validate_matrix

from .entities import ProcessedDataset


class Predictor(ABC):
    """Opaque classifier handle."""

    kind: str = "predictor"

    def __init__(self, n_features: int, n_classes: int, name: str = ""):
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.name = name or self.kind
        self._query_count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._query_count

    def predict_proba(self, rows: Sequence[Sequence[float]]) -> np.ndarray:
        """Probability rows, one per input row."""
        matrix = validate_matrix(rows, self.n_features)
        with self._lock:
            self._query_count += matrix.shape[0]
        return self._predict_proba(matrix)

    def predict_class(self, rows: Sequence[Sequence[float]]) -> np.ndarray:
        """Argmax of ``predict_proba``; ties go to the lower class index."""
        return np.argmax(self.predict_proba(rows), axis=1)

    def predict_one(self, row: Sequence[float]) -> int:
        return int(self.predict_class(np.asarray(row, dtype=float).reshape(1, -1))[0])

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "name": self.name,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
        }

    @abstractmethod
    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray: ...


def accuracy(predictor: Predictor, ds: ProcessedDataset) -> float:
    """Fraction of rows whose predicted class equals the label."""
    if len(ds) == 0:
        raise ValidationError("Cannot score an empty dataset", field="ds")
    if ds.n_features != predictor.n_features:
        raise ValidationError(
            f"Dataset has {ds.n_features} features, model expects {predictor.n_features}",
            field="ds",
        )
    return float(np.mean(predictor.predict_class(ds.matrix) == ds.labels))
