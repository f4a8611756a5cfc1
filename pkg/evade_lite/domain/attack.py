"""
Conversion-table guided evasion.

``evade`` walks the features of a sample, moves each one toward the impact
categories the conversion table lists for the (source, target) class pair
within an L-infinity budget, and queries the model after every modification.
``optimal_epsilon`` bisects the budget for the smallest one that still evades.
"""

from typing import List, Optional, Sequence

import numpy as np

from .analysis import categorize_feature
from .entities import AttackOutcome, ConversionTable, EpsilonSearchOutcome, ImpactCategory
from .interfaces import Predictor
from evade_lite.schemas import AttackConfig, EpsilonSearchConfig, Thresholds
from evade_lite.utils.exceptions import ValidationError
from evade_lite.utils.logging import get_logger
from evade_lite.utils.validation import validate_vector

logger = get_logger(__name__)

# Sentinel reported when no budget in the search range evades.
EPSILON_NOT_FOUND = 1.0


def category_midpoint(target: ImpactCategory, th: Thresholds) -> float:
    bounds = {
        ImpactCategory.L: (0.0, th.t_low),
        ImpactCategory.M: (th.t_low, th.t_high),
        ImpactCategory.H: (th.t_high, 1.0),
    }[target]
    return (bounds[0] + bounds[1]) / 2


def move_toward_category(
    value: float, target: ImpactCategory, eps: float, th: Thresholds
) -> float:
    """Step toward the midpoint of ``target``'s interval, at most ``eps``, clipped to [0, 1]."""
    step = float(np.clip(category_midpoint(target, th) - value, -eps, eps))
    return float(np.clip(value + step, 0.0, 1.0))


def _pair(a: Sequence[float], b: Sequence[float]):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(
            f"Vectors differ in length: {a.shape} vs {b.shape}", field="vector"
        )
    return a, b


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """L-infinity distance."""
    a, b = _pair(a, b)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def l2_distance(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = _pair(a, b)
    return float(np.linalg.norm(a - b))


def attack_features(table: ConversionTable, c_to: int, cfg: AttackConfig, n_features: int) -> List[int]:
    """
    Features an attack toward ``c_to`` visits, in visiting order.

    ``schema`` order follows ``allowed_features`` when given; ``shap_rank``
    follows the target class ranking. ``top_k`` keeps the k best-ranked.
    """
    if cfg.allowed_features is not None:
        outside = [f for f in cfg.allowed_features if f >= n_features]
        if outside:
            raise ValidationError(
                f"allowed_features out of range: {outside}", field="allowed_features"
            )

    if cfg.feature_order == "shap_rank":
        order = table.ranking_for(c_to)
        if cfg.allowed_features is not None:
            allowed = set(cfg.allowed_features)
            order = [f for f in order if f in allowed]
    else:
        order = (
            list(cfg.allowed_features)
            if cfg.allowed_features is not None
            else list(range(n_features))
        )

    if cfg.top_k is not None:
        top = set(table.ranking_for(c_to)[: cfg.top_k])
        order = [f for f in order if f in top]
    return order


def evade(
    predictor: Predictor,
    table: ConversionTable,
    x: Sequence[float],
    c_from: int,
    c_to: int,
    cfg: Optional[AttackConfig] = None,
) -> AttackOutcome:
    """
    One evasion pass from ``c_from`` toward ``c_to`` with budget ``cfg.d_max``.

    Modifications accumulate on a working copy of ``x``. Every modified feature
    stays within ``d_max`` of its original value and inside [0, 1]. Among the
    working rows the model assigns to ``c_to``, the closest to ``x`` is returned;
    without any, the last working row is returned with ``success=False``.

    Raises:
        AttackError: The class pair is missing from the table
        ValidationError: Same source and target, out-of-range or mis-sized ``x``
    """
    cfg = cfg or AttackConfig()
    if c_from == c_to:
        raise ValidationError("Source and target class must differ", field="c_to")
    x = validate_vector(x, predictor.n_features)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValidationError("Attacked rows must lie in [0, 1]", field="x")
    rules = table.rules_for(c_from, c_to)
    if len(rules) != predictor.n_features:
        raise ValidationError(
            f"Conversion table has {len(rules)} features, model expects {predictor.n_features}",
            field="table",
        )

    eps = cfg.d_max
    th = cfg.thresholds
    queries = 1
    if predictor.predict_one(x) == c_to:
        return AttackOutcome(
            adversarial_row=x.copy(), success=True, distance=0.0, queries=queries,
            c_from=c_from, c_to=c_to, epsilon=eps,
        )

    working = x.copy()
    modified: List[int] = []
    best_row: Optional[np.ndarray] = None
    best_modified: List[int] = []
    best_distance = np.inf

    for f in attack_features(table, c_to, cfg, predictor.n_features):
        for target in rules[f]:
            if categorize_feature(working[f], th) == target:
                continue
            moved = move_toward_category(working[f], target, eps, th)
            moved = float(np.clip(moved, max(x[f] - eps, 0.0), min(x[f] + eps, 1.0)))
            if moved == working[f]:
                continue
            working[f] = moved
            if f not in modified:
                modified.append(f)

            queries += 1
            if predictor.predict_one(working) == c_to:
                d = distance(working, x)
                if d < best_distance:
                    best_row, best_distance, best_modified = working.copy(), d, list(modified)

    if best_row is not None:
        return AttackOutcome(
            adversarial_row=best_row,
            success=True,
            distance=float(best_distance),
            queries=queries,
            modified_features=best_modified,
            l2_distance=l2_distance(best_row, x),
            c_from=c_from,
            c_to=c_to,
            epsilon=eps,
        )
    return AttackOutcome(
        adversarial_row=working,
        success=False,
        distance=distance(working, x),
        queries=queries,
        modified_features=modified,
        l2_distance=l2_distance(working, x),
        c_from=c_from,
        c_to=c_to,
        epsilon=eps,
    )


def untargeted_evade(
    predictor: Predictor,
    table: ConversionTable,
    x: Sequence[float],
    c_from: int,
    cfg: Optional[AttackConfig] = None,
) -> AttackOutcome:
    """
    Evade toward every other class; keep the closest success.

    ``queries`` sums the targeted runs. Distance ties go to the lower class.
    """
    outcomes = [
        evade(predictor, table, x, c_from, c_to, cfg)
        for c_to in range(table.n_classes)
        if c_to != c_from
    ]
    if not outcomes:
        raise ValidationError("No target class available", field="c_from")
    total_queries = sum(o.queries for o in outcomes)
    successes = [o for o in outcomes if o.success]
    chosen = min(successes, key=lambda o: o.distance) if successes else outcomes[-1]
    chosen.queries = total_queries
    return chosen


def optimal_epsilon(
    predictor: Predictor,
    table: ConversionTable,
    x: Sequence[float],
    c_from: int,
    c_to: int,
    scfg: Optional[EpsilonSearchConfig] = None,
    cfg: Optional[AttackConfig] = None,
) -> EpsilonSearchOutcome:
    """
    Bisect the budget for the smallest one whose evasion pass succeeds.

    The search halves ``[eps_low, eps_high]`` until it is narrower than the
    tolerance. A successful pass lowers the upper bound and is recorded; a
    failed one raises the lower bound. Midpoints never reach ``eps_high``, so
    when every halving failed one closing pass runs at ``eps_high`` itself.
    ``iterations`` counts halvings only; ``queries`` includes the closing pass.
    """
    scfg = scfg or EpsilonSearchConfig()
    cfg = cfg or AttackConfig()
    x = validate_vector(x, predictor.n_features)

    low, high = scfg.eps_low, scfg.eps_high
    epsilon_optimal = EPSILON_NOT_FOUND
    least_distance = EPSILON_NOT_FOUND
    best_row = x.copy()
    success = False
    iterations = 0
    queries = 0

    while high - low >= scfg.tolerance:
        mid = (low + high) / 2
        outcome = evade(predictor, table, x, c_from, c_to, cfg.with_epsilon(mid))
        iterations += 1
        queries += outcome.queries
        if outcome.success:
            high = mid
            success = True
            epsilon_optimal = mid
            best_row = outcome.adversarial_row
            least_distance = outcome.distance
        else:
            low = mid

    if not success:
        outcome = evade(predictor, table, x, c_from, c_to, cfg.with_epsilon(scfg.eps_high))
        queries += outcome.queries
        if outcome.success:
            success = True
            epsilon_optimal = scfg.eps_high
            best_row = outcome.adversarial_row
            least_distance = outcome.distance

    logger.debug(
        "Epsilon search finished",
        c_from=c_from,
        c_to=c_to,
        success=success,
        epsilon_optimal=epsilon_optimal,
        iterations=iterations,
    )
    return EpsilonSearchOutcome(
        epsilon_optimal=epsilon_optimal,
        best_adversarial=best_row,
        least_distance=least_distance,
        success=success,
        iterations=iterations,
        queries=queries,
        c_from=c_from,
        c_to=c_to,
    )
