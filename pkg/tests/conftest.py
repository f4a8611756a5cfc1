"""
Pytest configuration and fixtures for evade-lite tests.
"""

import json
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pytest

from evade_lite.domain.analysis import build_conversion_table, build_ssd, condense_ssd
from evade_lite.domain.entities import (
    ConversionTable,
    FeatureKind,
    FeatureSchema,
    ImpactCategory,
    ProcessedDataset,
)
from evade_lite.domain.explain import feature_ranking, sample_background, shap_values
from evade_lite.domain.interfaces import Predictor
from evade_lite.infrastructure.classifiers import train_logistic
from evade_lite.infrastructure.dataset import fit_preprocessor, load_csv, split_indices, transform
from evade_lite.schemas import ShapConfig, Thresholds, TrainConfig

IRIS_FEATURES = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
IRIS_SEED = 42


class LinearScoreModel(Predictor):
    """Test double returning raw linear scores ``X @ W.T + b`` per class."""

    kind = "linear_score"

    def __init__(self, weights: Sequence[Sequence[float]], bias: Sequence[float]):
        self.W = np.asarray(weights, dtype=float)
        self.b = np.asarray(bias, dtype=float)
        super().__init__(self.W.shape[1], self.W.shape[0], "linear_score")

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return matrix @ self.W.T + self.b


class ThresholdModel(Predictor):
    """Class 1 when feature ``feature`` is at least ``cut``, class 0 otherwise."""

    kind = "threshold"

    def __init__(self, n_features: int, feature: int = 0, cut: float = 0.5):
        super().__init__(n_features, 2, "threshold")
        self.feature = feature
        self.cut = cut

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        hit = (matrix[:, self.feature] >= self.cut).astype(float)
        return np.column_stack([1.0 - hit, hit])


def numeric_schema(n_features: int) -> List[FeatureSchema]:
    return [FeatureSchema(f"f{i}", FeatureKind.NUMERIC) for i in range(n_features)]


def make_processed(matrix: Sequence[Sequence[float]], labels: Sequence[int], n_classes: int) -> ProcessedDataset:
    matrix = np.asarray(matrix, dtype=float)
    return ProcessedDataset(
        matrix=matrix, labels=np.asarray(labels), n_classes=n_classes, schema=numeric_schema(matrix.shape[1])
    )


def make_table(rules: Dict[tuple, List[List[ImpactCategory]]], n_features: int, n_classes: int = 2) -> ConversionTable:
    return ConversionTable(
        n_classes=n_classes, feature_names=[f"f{i}" for i in range(n_features)], rules=rules
    )


@pytest.fixture
def thresholds() -> Thresholds:
    return Thresholds()


@pytest.fixture
def threshold_model() -> ThresholdModel:
    return ThresholdModel(n_features=2, feature=0, cut=0.5)


@pytest.fixture
def raise_first_table() -> ConversionTable:
    """Two-class table asking for feature 0 to go High for 0->1 and Low for 1->0."""
    return make_table(
        {
            (0, 1): [[ImpactCategory.H], []],
            (1, 0): [[ImpactCategory.L], []],
        },
        n_features=2,
    )


@pytest.fixture(scope="session")
def iris_csv(tmp_path_factory) -> Path:
    """The Iris table as a headed CSV with species names as labels."""
    from sklearn.datasets import load_iris

    iris = load_iris()
    path = tmp_path_factory.mktemp("data") / "iris.csv"
    lines = [",".join(IRIS_FEATURES + ["species"])]
    for row, target in zip(iris.data, iris.target):
        lines.append(",".join(f"{v:g}" for v in row) + f",{iris.target_names[target]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def iris_split(iris_csv):
    """(state, train, test) of the seeded Iris split."""
    raw = load_csv(iris_csv)
    train_idx, test_idx = split_indices(len(raw), 1 / 3, IRIS_SEED)
    state = fit_preprocessor(raw.take(train_idx))
    return state, transform(state, raw.take(train_idx)), transform(state, raw.take(test_idx))


@pytest.fixture(scope="session")
def iris_train(iris_split) -> ProcessedDataset:
    return iris_split[1]


@pytest.fixture(scope="session")
def iris_test(iris_split) -> ProcessedDataset:
    return iris_split[2]


@pytest.fixture(scope="session")
def iris_logistic(iris_train):
    return train_logistic(iris_train, TrainConfig(seed=IRIS_SEED), name="logistic")


@pytest.fixture(scope="session")
def iris_shap(iris_logistic, iris_train):
    background = sample_background(iris_train.matrix, 50, IRIS_SEED)
    return shap_values(
        iris_logistic, iris_train.matrix, background, ShapConfig(), feature_names=iris_train.feature_names
    )


@pytest.fixture(scope="session")
def iris_table(iris_train, iris_shap) -> ConversionTable:
    concise = condense_ssd(build_ssd(iris_train, iris_shap, Thresholds()))
    return build_conversion_table(concise, feature_ranking(iris_shap))


@pytest.fixture
def iris_config(iris_csv, tmp_path) -> Path:
    """Run configuration of a small Iris campaign writing into ``tmp_path``."""
    config = {
        "name": "iris",
        "seed": IRIS_SEED,
        "dataset": {"path": str(iris_csv)},
        "model": {"kind": "logistic", "train": {"epochs": 500}},
        "shap": {"background_size": 30},
        "explain": {"split": "train", "max_instances": 40},
        "epsilons": [0.3, 0.5],
        "output_dir": str(tmp_path / "run"),
    }
    path = tmp_path / "iris.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path
