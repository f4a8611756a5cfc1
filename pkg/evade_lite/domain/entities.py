"""
Domain entities for evade-lite.

This module contains the core data types shared by the preprocessing, model,
explanation, analysis, attack and evaluation layers.
"""

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from evade_lite.utils.exceptions import AttackError, ValidationError


class FeatureKind(Enum):
    """Kind of a tabular feature."""

    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class ImpactCategory(Enum):
    """Low / Medium / High bucket of a normalized feature value."""

    L = "L"
    M = "M"
    H = "H"

    @property
    def rank(self) -> int:
        return _IMPACT_ORDER.index(self)

    def __lt__(self, other: "ImpactCategory") -> bool:
        if not isinstance(other, ImpactCategory):
            return NotImplemented
        return self.rank < other.rank


_IMPACT_ORDER = [ImpactCategory.L, ImpactCategory.M, ImpactCategory.H]


class ShapCategory(Enum):
    """Sign bucket of a SHAP value."""

    P = "P"
    N_T = "N_T"
    N = "N"


@dataclass(frozen=True)
class FeatureSchema:
    """Name, kind and (for categoricals) the ordered category labels of a column."""

    name: str
    kind: FeatureKind
    categories: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.categories)) != len(self.categories):
            raise ValidationError(
                f"Category labels of feature {self.name} are not unique", field=self.name
            )

    @property
    def is_categorical(self) -> bool:
        return self.kind == FeatureKind.CATEGORICAL


@dataclass
class Dataset:
    """
    Raw tabular dataset.

    ``frame`` holds one column per schema entry, in schema order: floats for
    numeric features, text for categorical ones.
    """

    schema: List[FeatureSchema]
    frame: pd.DataFrame
    labels: List[str]

    def __post_init__(self) -> None:
        if list(self.frame.columns) != [f.name for f in self.schema]:
            raise ValidationError("Dataset columns do not match its schema", field="schema")
        if len(self.labels) != len(self.frame):
            raise ValidationError("Dataset has a label count different from its row count")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def rows(self) -> List[List[Any]]:
        return self.frame.values.tolist()

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.schema]

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Row subset in the given order."""
        idx = list(indices)
        return Dataset(
            schema=self.schema,
            frame=self.frame.iloc[idx].reset_index(drop=True),
            labels=[self.labels[i] for i in idx],
        )


@dataclass
class FeatureScaling:
    """Fitted encoding of one feature."""

    name: str
    kind: FeatureKind
    minimum: float = 0.0
    maximum: float = 0.0
    categories: List[str] = field(default_factory=list)

    @property
    def is_constant(self) -> bool:
        return self.kind == FeatureKind.NUMERIC and self.maximum == self.minimum

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == FeatureKind.NUMERIC:
            return {
                "name": self.name,
                "kind": self.kind.value,
                "min": self.minimum,
                "max": self.maximum,
            }
        return {"name": self.name, "kind": self.kind.value, "categories": list(self.categories)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureScaling":
        kind = FeatureKind(data["kind"])
        if kind == FeatureKind.NUMERIC:
            return cls(data["name"], kind, float(data["min"]), float(data["max"]))
        return cls(data["name"], kind, categories=list(data["categories"]))


@dataclass
class PreprocessorState:
    """Per-feature scaling parameters plus the class label mapping."""

    features: List[FeatureScaling]
    class_labels: List[str]

    def __post_init__(self) -> None:
        for f in self.features:
            if f.kind == FeatureKind.NUMERIC and f.maximum < f.minimum:
                raise ValidationError(f"Feature {f.name} has max < min", field=f.name)

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "features": [f.to_dict() for f in self.features],
            "class_labels": list(self.class_labels),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocessorState":
        return cls(
            features=[FeatureScaling.from_dict(f) for f in data["features"]],
            class_labels=list(data["class_labels"]),
        )


@dataclass
class ProcessedDataset:
    """Feature matrix scaled to [0, 1] with dense integer labels."""

    matrix: np.ndarray
    labels: np.ndarray
    n_classes: int
    schema: List[FeatureSchema]
    class_names: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.matrix = np.array(self.matrix, dtype=float)
        self.labels = np.array(self.labels, dtype=int)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.schema):
            raise ValidationError("Matrix width does not match the schema", field="matrix")
        if self.labels.shape != (self.matrix.shape[0],):
            raise ValidationError("Label count does not match row count", field="labels")
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("Processed values must be finite", field="matrix")
        if self.matrix.size and (self.matrix.min() < 0.0 or self.matrix.max() > 1.0):
            raise ValidationError("Processed values must lie in [0, 1]", field="matrix")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValidationError("Labels must lie in {0..C-1}", field="labels")
        if not self.class_names:
            self.class_names = [str(c) for c in range(self.n_classes)]
        self.matrix.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def feature_names(self) -> List[str]:
        return [f.name for f in self.schema]

    def take(self, indices: Sequence[int]) -> "ProcessedDataset":
        idx = np.asarray(list(indices), dtype=int)
        return ProcessedDataset(
            matrix=self.matrix[idx],
            labels=self.labels[idx],
            n_classes=self.n_classes,
            schema=self.schema,
            class_names=self.class_names,
        )


@dataclass
class ShapTensor:
    """SHAP values indexed [sample][class][feature] plus per-class base values."""

    values: np.ndarray
    base_values: np.ndarray
    feature_names: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.base_values = np.asarray(self.base_values, dtype=float)
        if self.values.ndim != 3:
            raise ValidationError("SHAP values must be a 3-D array", field="values")
        if self.base_values.shape != (self.values.shape[1],):
            raise ValidationError("One base value per class is required", field="base_values")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.values.shape[2])]
        if len(self.feature_names) != self.values.shape[2]:
            raise ValidationError("Feature names do not match the tensor", field="feature_names")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    @property
    def n_features(self) -> int:
        return self.values.shape[2]


@dataclass
class ShapSummaryDictionary:
    """class -> feature -> SHAP category -> multiset of impact categories."""

    n_classes: int
    feature_names: List[str]
    buckets: Dict[int, Dict[int, Dict[ShapCategory, Counter]]] = field(default_factory=dict)

    def add(self, c: int, feature: int, shap_cat: ShapCategory, impact: ImpactCategory) -> None:
        per_feature = self.buckets.setdefault(c, {}).setdefault(feature, {})
        per_feature.setdefault(shap_cat, Counter())[impact] += 1

    def count(self, c: int, feature: int, shap_cat: ShapCategory, impact: ImpactCategory) -> int:
        return self.buckets.get(c, {}).get(feature, {}).get(shap_cat, Counter())[impact]

    def total(self, c: int, feature: int) -> int:
        per_feature = self.buckets.get(c, {}).get(feature, {})
        return sum(sum(counter.values()) for counter in per_feature.values())


@dataclass
class ConciseSSD:
    """class -> feature -> impact category -> majority SHAP category."""

    n_classes: int
    feature_names: List[str]
    assignments: Dict[int, Dict[int, Dict[ImpactCategory, ShapCategory]]] = field(
        default_factory=dict
    )

    def get(self, c: int, feature: int) -> Dict[ImpactCategory, ShapCategory]:
        return self.assignments.get(c, {}).get(feature, {})

    def to_dict(self) -> Dict[str, Any]:
        return {
            str(c): {
                self.feature_names[f]: {
                    impact.value: shap_cat.value
                    for impact, shap_cat in sorted(mapping.items(), key=lambda kv: kv[0].rank)
                }
                for f, mapping in sorted(per_class.items())
            }
            for c, per_class in sorted(self.assignments.items())
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], feature_names: List[str]) -> "ConciseSSD":
        index = {name: i for i, name in enumerate(feature_names)}
        assignments = {
            int(c): {
                index[name]: {ImpactCategory(k): ShapCategory(v) for k, v in mapping.items()}
                for name, mapping in per_class.items()
            }
            for c, per_class in data.items()
        }
        return cls(n_classes=len(assignments), feature_names=feature_names, assignments=assignments)


NO_CONVERSION = "-"


@dataclass
class ConversionTable:
    """
    Per ordered class pair, per feature, the target impact categories.

    An empty list is the ``"-"`` marker (no modification for that feature).
    ``feature_ranking`` maps a class to feature indices ordered by descending
    global mean |SHAP|; it drives ``shap_rank`` ordering and top-k restriction.
    """

    n_classes: int
    feature_names: List[str]
    rules: Dict[Tuple[int, int], List[List[ImpactCategory]]]
    feature_ranking: Dict[int, List[int]] = field(default_factory=dict)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return sorted(self.rules)

    def rules_for(self, c_from: int, c_to: int) -> List[List[ImpactCategory]]:
        try:
            return self.rules[(c_from, c_to)]
        except KeyError:
            raise AttackError(
                f"Class pair {c_from}->{c_to} is not in the conversion table",
                pair=f"{c_from}->{c_to}",
            ) from None

    def ranking_for(self, c: int) -> List[int]:
        """Features of class ``c`` by importance; schema order when unknown."""
        return list(self.feature_ranking.get(c, range(len(self.feature_names))))

    def to_dict(self) -> Dict[str, Any]:
        return {
            f"{i}->{j}": {
                self.feature_names[f]: ([c.value for c in targets] if targets else NO_CONVERSION)
                for f, targets in enumerate(self.rules[(i, j)])
            }
            for i, j in self.pairs
        }

    @classmethod
    def from_dict(
        cls,
        data: Dict[str, Any],
        feature_names: List[str],
        feature_ranking: Optional[Dict[int, List[int]]] = None,
    ) -> "ConversionTable":
        rules: Dict[Tuple[int, int], List[List[ImpactCategory]]] = {}
        classes = set()
        for key, per_feature in data.items():
            i, j = (int(part) for part in key.split("->"))
            classes.update((i, j))
            rules[(i, j)] = [
                []
                if per_feature[name] == NO_CONVERSION
                else [ImpactCategory(c) for c in per_feature[name]]
                for name in feature_names
            ]
        return cls(
            n_classes=len(classes),
            feature_names=list(feature_names),
            rules=rules,
            feature_ranking=feature_ranking or {},
        )


@dataclass
class AttackOutcome:
    """Result of one evasion pass."""

    adversarial_row: np.ndarray
    success: bool
    distance: float
    queries: int
    modified_features: List[int] = field(default_factory=list)
    l2_distance: float = 0.0
    c_from: Optional[int] = None
    c_to: Optional[int] = None
    epsilon: Optional[float] = None


@dataclass
class EpsilonSearchOutcome:
    """Result of the optimal epsilon bisection."""

    epsilon_optimal: float
    best_adversarial: np.ndarray
    least_distance: float
    success: bool
    iterations: int
    queries: int = 0
    c_from: Optional[int] = None
    c_to: Optional[int] = None


@dataclass(frozen=True)
class EfficacyRecord:
    """Efficacy of one (model, epsilon, target class) stratum."""

    model: str
    epsilon: float
    target_class: Optional[int]
    n: int
    evaded: int

    @property
    def efficacy(self) -> float:
        return self.evaded / self.n if self.n else 0.0


@dataclass
class EfficacyReport:
    """Efficacy strata of a sweep."""

    records: List[EfficacyRecord] = field(default_factory=list)

    columns = ("model", "epsilon", "target_class", "n", "evaded", "efficacy")

    def rows(self) -> List[Tuple[Any, ...]]:
        ordered = sorted(
            self.records,
            key=lambda r: (r.model, r.epsilon, -1 if r.target_class is None else r.target_class),
        )
        return [
            (
                r.model,
                r.epsilon,
                "any" if r.target_class is None else r.target_class,
                r.n,
                r.evaded,
                r.efficacy,
            )
            for r in ordered
        ]

    def get(self, epsilon: float, target_class: Optional[int] = None) -> EfficacyRecord:
        for record in self.records:
            if record.epsilon == epsilon and record.target_class == target_class:
                return record
        raise KeyError((epsilon, target_class))


@dataclass(frozen=True)
class SaturationPoint:
    """Efficacy when only the top-k features may be perturbed."""

    model: str
    epsilon: float
    k: int
    efficacy: float


@dataclass
class SaturationReport:
    """Saturation curves, one per epsilon."""

    points: List[SaturationPoint] = field(default_factory=list)

    columns = ("model", "epsilon", "k", "efficacy")

    def rows(self) -> List[Tuple[Any, ...]]:
        ordered = sorted(self.points, key=lambda p: (p.model, p.epsilon, p.k))
        return [(p.model, p.epsilon, p.k, p.efficacy) for p in ordered]

    def curve(self, epsilon: float) -> List[Tuple[int, float]]:
        return sorted((p.k, p.efficacy) for p in self.points if p.epsilon == epsilon)

    @property
    def epsilons(self) -> List[float]:
        return sorted({p.epsilon for p in self.points})


@dataclass(frozen=True)
class AccuracyRecord:
    """Model accuracy before and after an untargeted campaign at one epsilon."""

    model: str
    epsilon: float
    acc_before: float
    acc_after: float


@dataclass
class AccuracyImpact:
    """Accuracy degradation across epsilons."""

    records: List[AccuracyRecord] = field(default_factory=list)

    columns = ("model", "epsilon", "acc_before", "acc_after")

    def rows(self) -> List[Tuple[Any, ...]]:
        ordered = sorted(self.records, key=lambda r: (r.model, r.epsilon))
        return [(r.model, r.epsilon, r.acc_before, r.acc_after) for r in ordered]

    def get(self, epsilon: float) -> AccuracyRecord:
        for record in self.records:
            if record.epsilon == epsilon:
                return record
        raise KeyError(epsilon)
