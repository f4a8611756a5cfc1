"""
Data validation utilities for evade-lite.
"""

import math
from typing import Sequence

import numpy as np

from .exceptions import ProtocolError, ValidationError

PROBABILITY_TOLERANCE = 1e-9


def validate_fraction(value: float, field: str = "test_fraction") -> float:
    """
    Validate a ratio strictly inside (0, 1).

    Args:
        value: Ratio to validate
        field: Name reported in the error

    Returns:
        Validated ratio

    Raises:
        ValidationError: If the ratio is outside (0, 1)
    """
    if not (0.0 < value < 1.0):
        raise ValidationError(f"{field} must lie in (0, 1), got {value}", field=field)
    return float(value)


def validate_unit_interval(value: float, field: str = "value") -> float:
    """Validate a real value inside [0, 1]."""
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValidationError(f"{field} must lie in [0, 1], got {value}", field=field)
    return float(value)


def validate_matrix(
    rows: Sequence[Sequence[float]], n_features: int, field: str = "rows"
) -> np.ndarray:
    """
    Coerce rows into a 2-D float matrix with the expected feature count.

    Raises:
        ValidationError: If the shape does not match
    """
    matrix = np.asarray(rows, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2 or matrix.shape[1] != n_features:
        raise ValidationError(
            f"Expected rows with {n_features} features, got shape {matrix.shape}",
            field=field,
        )
    return matrix


def validate_vector(row: Sequence[float], n_features: int, field: str = "x") -> np.ndarray:
    """Coerce a single row into a 1-D float vector of the expected length."""
    vector = np.asarray(row, dtype=float)
    if vector.ndim != 1 or vector.shape[0] != n_features:
        raise ValidationError(
            f"Expected a vector of length {n_features}, got shape {vector.shape}",
            field=field,
        )
    return vector


def validate_distribution_rows(probabilities: np.ndarray, n_classes: int) -> np.ndarray:
    """
    Check that every row is a probability distribution over ``n_classes``.

    Raises:
        ProtocolError: If a row is negative, has the wrong width or does not sum to 1
    """
    matrix = np.asarray(probabilities, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != n_classes:
        raise ProtocolError(
            f"Expected probability rows of length {n_classes}, got shape {matrix.shape}",
            field="probabilities",
        )
    if not np.all(np.isfinite(matrix)) or np.any(matrix < -PROBABILITY_TOLERANCE):
        raise ProtocolError("Probability row is not a distribution", field="probabilities")
    sums = matrix.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ProtocolError("Probability row is not a distribution", field="probabilities")
    return matrix
