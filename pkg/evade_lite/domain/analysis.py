"""
Evasion knowledge compiled from SHAP output.

Feature values are bucketed into impact categories (L/M/H), SHAP values into
sign categories (P/N_T/N). Tallying both per class and feature gives the SHAP
summary dictionary; the per-impact majority gives the concise dictionary, and
set algebra over two classes' concise entries gives the conversion table that
guides the attack.
"""

from itertools import permutations
from typing import Dict, List, Optional, Set, Tuple

from .entities import (
    ConciseSSD,
    ConversionTable,
    ImpactCategory,
    ProcessedDataset,
    ShapCategory,
    ShapSummaryDictionary,
    ShapTensor,
)
from evade_lite.schemas import Thresholds
from evade_lite.utils.exceptions import ValidationError
from evade_lite.utils.logging import get_logger
from evade_lite.utils.validation import validate_unit_interval

logger = get_logger(__name__)

# Majority ties resolve toward directional evidence first.
SHAP_PRECEDENCE = (ShapCategory.P, ShapCategory.N, ShapCategory.N_T)

# How much the source class likes a category; lower is a better fallback target.
SOURCE_PREFERENCE = {ShapCategory.N: 0, ShapCategory.N_T: 1, ShapCategory.P: 2}


def categorize_feature(value: float, th: Thresholds) -> ImpactCategory:
    """L below t_low, M on [t_low, t_high), H from t_high up."""
    value = validate_unit_interval(value)
    if value < th.t_low:
        return ImpactCategory.L
    if value < th.t_high:
        return ImpactCategory.M
    return ImpactCategory.H


def categorize_shap(value: float, neutral_band: float = 1e-9) -> ShapCategory:
    if value > neutral_band:
        return ShapCategory.P
    if value < -neutral_band:
        return ShapCategory.N
    return ShapCategory.N_T


def build_ssd(
    ds: ProcessedDataset,
    tensor: ShapTensor,
    th: Thresholds,
    neutral_band: float = 1e-9,
) -> ShapSummaryDictionary:
    """
    Tally impact categories under SHAP categories per class and feature.

    Row ``j`` of ``ds`` must be the instance explained by ``tensor.values[j]``.
    """
    if len(ds) != tensor.n_samples or ds.n_features != tensor.n_features:
        raise ValidationError(
            f"Dataset shape ({len(ds)}, {ds.n_features}) does not match SHAP tensor "
            f"({tensor.n_samples}, {tensor.n_features})",
            field="tensor",
        )

    ssd = ShapSummaryDictionary(n_classes=tensor.n_classes, feature_names=ds.feature_names)
    impacts = [
        [categorize_feature(float(v), th) for v in row] for row in ds.matrix
    ]
    for j in range(tensor.n_samples):
        for c in range(tensor.n_classes):
            for i in range(tensor.n_features):
                ssd.add(c, i, categorize_shap(float(tensor.values[j, c, i]), neutral_band), impacts[j][i])
    return ssd


def condense_ssd(ssd: ShapSummaryDictionary) -> ConciseSSD:
    """Assign each observed (class, feature, impact) its majority SHAP category."""
    if not ssd.buckets:
        raise ValidationError("SHAP summary dictionary is empty", field="ssd")

    assignments: Dict[int, Dict[int, Dict[ImpactCategory, ShapCategory]]] = {}
    for c, per_class in ssd.buckets.items():
        for feature, per_feature in per_class.items():
            observed = {impact for counter in per_feature.values() for impact in counter}
            mapping: Dict[ImpactCategory, ShapCategory] = {}
            for impact in sorted(observed):
                # max() keeps the first maximum, so precedence order settles ties
                mapping[impact] = max(
                    SHAP_PRECEDENCE,
                    key=lambda cat: ssd.count(c, feature, cat, impact),
                )
            assignments.setdefault(c, {})[feature] = mapping
    return ConciseSSD(
        n_classes=ssd.n_classes, feature_names=list(ssd.feature_names), assignments=assignments
    )


def class_conversions(n_classes: int) -> List[Tuple[int, int]]:
    """Every ordered pair of distinct classes, sorted."""
    if n_classes < 2:
        raise ValidationError("At least two classes are required", field="n_classes")
    return sorted(permutations(range(n_classes), 2))


def _categories_with(
    concise: ConciseSSD, c: int, feature: int, wanted: Set[ShapCategory]
) -> Set[ImpactCategory]:
    return {impact for impact, cat in concise.get(c, feature).items() if cat in wanted}


def feature_effects(concise: ConciseSSD, i: int, j: int) -> List[List[ImpactCategory]]:
    """
    Target impact categories per feature for moving a sample from class i to j.

    A category qualifies when it pushes toward j and is neutral or negative for
    i, or when it is neutral or positive for j and negative for i.
    """
    if i == j:
        raise ValidationError("Source and target class must differ", field="pair")
    for c in (i, j):
        if c not in concise.assignments:
            raise ValidationError(f"Class {c} is not in the concise SSD", field="class")

    effects: List[List[ImpactCategory]] = []
    for f in range(len(concise.feature_names)):
        pos_j = _categories_with(concise, j, f, {ShapCategory.P})
        posneu_j = _categories_with(concise, j, f, {ShapCategory.P, ShapCategory.N_T})
        neg_i = _categories_with(concise, i, f, {ShapCategory.N})
        negneu_i = _categories_with(concise, i, f, {ShapCategory.N, ShapCategory.N_T})
        toward_j = negneu_i & pos_j
        away_from_i = posneu_j & neg_i
        effects.append(sorted(toward_j | away_from_i))
    return effects


def target_fallback(
    concise: ConciseSSD, i: int, j: int, effects: List[List[ImpactCategory]]
) -> List[List[ImpactCategory]]:
    """
    Fill features with no conversion from the target's positive categories.

    A feature whose categories push both classes the same way gets no entry
    from ``feature_effects``. Such a feature is sent to the single category
    that is positive for ``j`` and least favoured by ``i``; ties go to the
    lower category. Features with no positive category for ``j`` stay empty.
    """
    filled: List[List[ImpactCategory]] = []
    for f, targets in enumerate(effects):
        candidates = sorted(_categories_with(concise, j, f, {ShapCategory.P}))
        if targets or not candidates:
            filled.append(targets)
            continue
        source = concise.get(i, f)
        filled.append(
            [min(candidates, key=lambda cat: SOURCE_PREFERENCE[source.get(cat, ShapCategory.N_T)])]
        )
    return filled


def build_conversion_table(
    concise: ConciseSSD,
    feature_ranking: Optional[Dict[int, List[int]]] = None,
    fallback: bool = True,
) -> ConversionTable:
    """
    Conversion table over every ordered class pair.

    Args:
        concise: Concise SSD covering all classes
        feature_ranking: Per class, feature indices by descending global mean
            |SHAP|; stored on the table for ranked attacks
        fallback: Fill empty entries with the target class's positive
            categories (``target_fallback``); ``False`` keeps the bare set algebra

    Returns:
        ConversionTable with C*(C-1) pair entries of M feature entries each
    """
    pairs = class_conversions(concise.n_classes)
    rules = {(i, j): feature_effects(concise, i, j) for i, j in pairs}
    if fallback:
        rules = {(i, j): target_fallback(concise, i, j, effects) for (i, j), effects in rules.items()}
    table = ConversionTable(
        n_classes=concise.n_classes,
        feature_names=list(concise.feature_names),
        rules=rules,
        feature_ranking=dict(feature_ranking or {}),
    )
    logger.info(
        "Conversion table built",
        pairs=len(pairs),
        features=len(concise.feature_names),
        empty_entries=sum(1 for targets in rules.values() for t in targets if not t),
    )
    return table
