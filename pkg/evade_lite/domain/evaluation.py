"""
Attack campaigns and their metrics: efficacy per budget and target class,
saturation over the number of perturbable features, and accuracy degradation.
"""

from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .attack import evade, optimal_epsilon, untargeted_evade
from .entities import (
    AccuracyImpact,
    AccuracyRecord,
    AttackOutcome,
    ConversionTable,
    EfficacyRecord,
    EfficacyReport,
    EpsilonSearchOutcome,
    ProcessedDataset,
    SaturationPoint,
    SaturationReport,
)
from .interfaces import Predictor, accuracy
from evade_lite.schemas import AttackConfig, EpsilonSearchConfig
from evade_lite.utils.concurrency import parallel_map
from evade_lite.utils.exceptions import ValidationError
from evade_lite.utils.logging import CampaignLogger, get_logger

logger = get_logger(__name__)

SampleOutcome = Tuple[int, AttackOutcome]


def efficacy(n_evaded: int, n_total: int) -> float:
    """Share of attacked samples that evaded."""
    if n_total <= 0:
        raise ValidationError("Efficacy needs at least one attacked sample", field="n_total")
    if not (0 <= n_evaded <= n_total):
        raise ValidationError(
            f"Evaded count {n_evaded} outside [0, {n_total}]", field="n_evaded"
        )
    return n_evaded / n_total


def _check_campaign(test: ProcessedDataset, eps_list: Sequence[float]) -> None:
    if len(test) == 0:
        raise ValidationError("Test set is empty", field="test")
    if not list(eps_list):
        raise ValidationError("Epsilon list must not be empty", field="eps_list")


def _log_outcomes(campaign: CampaignLogger, outcomes: Iterable[SampleOutcome]) -> None:
    for index, outcome in outcomes:
        campaign.log_attack(
            index, outcome.c_from, outcome.c_to, outcome.success, outcome.distance, outcome.queries
        )


def run_targeted(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    target: int,
    cfg: AttackConfig,
    workers: int = 1,
) -> List[SampleOutcome]:
    """Attack every sample whose label differs from ``target`` toward it."""
    indices = [i for i in range(len(test)) if test.labels[i] != target]
    outcomes = parallel_map(
        lambda i: evade(predictor, table, test.matrix[i], int(test.labels[i]), target, cfg),
        indices,
        workers=workers,
    )
    return list(zip(indices, outcomes))


def run_untargeted(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    cfg: AttackConfig,
    workers: int = 1,
) -> List[SampleOutcome]:
    """Untargeted attack of every sample away from its label."""
    indices = list(range(len(test)))
    outcomes = parallel_map(
        lambda i: untargeted_evade(predictor, table, test.matrix[i], int(test.labels[i]), cfg),
        indices,
        workers=workers,
    )
    return list(zip(indices, outcomes))


def run_epsilon_search(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    target: int,
    scfg: EpsilonSearchConfig,
    cfg: AttackConfig,
    workers: int = 1,
) -> List[Tuple[int, EpsilonSearchOutcome]]:
    """Optimal budget search for every sample whose label differs from ``target``."""
    indices = [i for i in range(len(test)) if test.labels[i] != target]
    outcomes = parallel_map(
        lambda i: optimal_epsilon(
            predictor, table, test.matrix[i], int(test.labels[i]), target, scfg, cfg
        ),
        indices,
        workers=workers,
    )
    return list(zip(indices, outcomes))


def stratum_record(
    model: str, epsilon: float, target: Optional[int], outcomes: Sequence[SampleOutcome]
) -> EfficacyRecord:
    evaded = sum(1 for _, o in outcomes if o.success)
    return EfficacyRecord(
        model=model, epsilon=epsilon, target_class=target, n=len(outcomes), evaded=evaded
    )


def targeted_sweep(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    eps_list: Sequence[float],
    cfg: Optional[AttackConfig] = None,
    model: Optional[str] = None,
    workers: int = 1,
) -> EfficacyReport:
    """
    Efficacy per (epsilon, target class).

    Samples already labelled with the target class are not attacked and do
    not count toward that stratum.
    """
    _check_campaign(test, eps_list)
    cfg = cfg or AttackConfig()
    model = model or predictor.name
    campaign = CampaignLogger(model)

    report = EfficacyReport()
    for eps in eps_list:
        eps_cfg = cfg.with_epsilon(eps)
        for target in range(test.n_classes):
            outcomes = run_targeted(predictor, table, test, target, eps_cfg, workers)
            _log_outcomes(campaign, outcomes)
            record = stratum_record(model, eps, target, outcomes)
            campaign.log_stratum(eps, target, record.evaded, record.n)
            report.records.append(record)
    return report


def untargeted_sweep(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    eps_list: Sequence[float],
    cfg: Optional[AttackConfig] = None,
    model: Optional[str] = None,
    workers: int = 1,
) -> EfficacyReport:
    """One efficacy value per epsilon over all test samples."""
    _check_campaign(test, eps_list)
    cfg = cfg or AttackConfig()
    model = model or predictor.name
    campaign = CampaignLogger(model)

    report = EfficacyReport()
    for eps in eps_list:
        outcomes = run_untargeted(predictor, table, test, cfg.with_epsilon(eps), workers)
        _log_outcomes(campaign, outcomes)
        record = stratum_record(model, eps, None, outcomes)
        campaign.log_stratum(eps, None, record.evaded, record.n)
        report.records.append(record)
    return report


def saturation_sweep(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    eps_list: Sequence[float],
    cfg: Optional[AttackConfig] = None,
    model: Optional[str] = None,
    workers: int = 1,
) -> SaturationReport:
    """
    Untargeted efficacy when only the k best-ranked features may move.

    k runs from 1 to the feature count; features are visited in rank order.
    """
    _check_campaign(test, eps_list)
    cfg = cfg or AttackConfig()
    model = model or predictor.name

    report = SaturationReport()
    for eps in eps_list:
        for k in range(1, test.n_features + 1):
            k_cfg = AttackConfig.model_validate(
                {**cfg.model_dump(), "d_max": eps, "top_k": k, "feature_order": "shap_rank"}
            )
            outcomes = run_untargeted(predictor, table, test, k_cfg, workers)
            evaded = sum(1 for _, o in outcomes if o.success)
            report.points.append(
                SaturationPoint(model=model, epsilon=eps, k=k, efficacy=efficacy(evaded, len(test)))
            )
        logger.info("Saturation curve finished", model=model, epsilon=eps, curve=report.curve(eps))
    return report


def saturation_point(curve: Sequence[Tuple[int, float]], ratio: float = 0.95) -> int:
    """
    Smallest k whose efficacy reaches ``ratio`` times the efficacy at the largest k.
    """
    if not curve:
        raise ValidationError("Saturation curve is empty", field="curve")
    ordered = sorted(curve)
    full = ordered[-1][1]
    for k, value in ordered:
        if value >= ratio * full:
            return k
    return ordered[-1][0]


def adversarial_matrix(test: ProcessedDataset, outcomes: Sequence[SampleOutcome]) -> np.ndarray:
    """Test matrix with every successfully attacked row replaced."""
    rows = np.array(test.matrix, dtype=float)
    for index, outcome in outcomes:
        if outcome.success:
            rows[index] = outcome.adversarial_row
    return rows


def accuracy_impact(
    predictor: Predictor,
    table: ConversionTable,
    test: ProcessedDataset,
    eps_list: Sequence[float],
    cfg: Optional[AttackConfig] = None,
    model: Optional[str] = None,
    workers: int = 1,
) -> AccuracyImpact:
    """
    Accuracy on the clean test set and on its untargeted adversarial version.

    A failed attack leaves the clean row in place.
    """
    _check_campaign(test, eps_list)
    cfg = cfg or AttackConfig()
    model = model or predictor.name

    before = accuracy(predictor, test)
    impact = AccuracyImpact()
    for eps in eps_list:
        outcomes = run_untargeted(predictor, table, test, cfg.with_epsilon(eps), workers)
        attacked = adversarial_matrix(test, outcomes)
        after = float(np.mean(predictor.predict_class(attacked) == test.labels))
        impact.records.append(
            AccuracyRecord(model=model, epsilon=eps, acc_before=before, acc_after=after)
        )
        logger.info("Accuracy impact", model=model, epsilon=eps, before=before, after=after)
    return impact
