"""
Model-agnostic Kernel SHAP engine.

A coalition S of features is valued as the mean prediction over background rows
whose features in S are replaced by the explained instance's values. SHAP values
are the solution of the kernel-weighted least-squares problem over coalitions,
with the efficiency constraint (sum of values = f(x) - base) imposed exactly by
eliminating the last feature. All classes are solved in one system.
"""

import time
from itertools import combinations
from math import comb
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .entities import ProcessedDataset, ShapTensor
from .interfaces import Predictor
from evade_lite.schemas import ShapConfig
from evade_lite.utils.concurrency import parallel_map
from evade_lite.utils.exceptions import ValidationError
from evade_lite.utils.logging import PerformanceLogger, get_logger
from evade_lite.utils.validation import validate_matrix

logger = get_logger(__name__)
perf_logger = PerformanceLogger("explain")

# Coalitions evaluated per predictor call.
COALITION_BATCH = 256


def shapley_kernel_weight(M: int, s: int) -> float:
    """Kernel SHAP weight (M-1) / (C(M,s) * s * (M-s)) of a coalition of size s."""
    if not (1 <= s <= M - 1):
        raise ValidationError(
            f"Coalition size must lie in [1, {M - 1}], got {s}", field="coalition_size"
        )
    return (M - 1) / (comb(M, s) * s * (M - s))


def uses_exact_mode(n_features: int, cfg: ShapConfig) -> bool:
    """Exact enumeration when M is small or every proper coalition fits the budget."""
    return n_features <= cfg.exact_threshold or (2**n_features - 2) <= cfg.sample_budget


def exact_coalitions(M: int) -> Tuple[np.ndarray, np.ndarray]:
    """All 2^M - 2 proper non-empty coalitions with their kernel weights."""
    masks: List[np.ndarray] = []
    weights: List[float] = []
    for s in range(1, M):
        w = shapley_kernel_weight(M, s)
        for members in combinations(range(M), s):
            z = np.zeros(M, dtype=bool)
            z[list(members)] = True
            masks.append(z)
            weights.append(w)
    return np.array(masks, dtype=bool).reshape(-1, M), np.array(weights)


def sampled_coalitions(
    M: int, budget: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Paired coalition sample.

    Sizes are drawn proportionally to the total kernel weight of each size and
    every draw is paired with its complement, so the regression weights are
    uniform.
    """
    sizes = np.arange(1, M)
    size_weights = (M - 1) / (sizes * (M - sizes))
    size_probs = size_weights / size_weights.sum()

    n_pairs = budget // 2
    masks = np.zeros((2 * n_pairs, M), dtype=bool)
    for p in range(n_pairs):
        s = int(rng.choice(sizes, p=size_probs))
        members = rng.choice(M, size=s, replace=False)
        masks[2 * p, members] = True
        masks[2 * p + 1] = ~masks[2 * p]
    return masks, np.ones(2 * n_pairs)


def coalition_values(
    predictor: Predictor, x: np.ndarray, background: np.ndarray, masks: np.ndarray
) -> np.ndarray:
    """Mean class probabilities of hybrid rows (x on the coalition, background off it)."""
    n_bg = background.shape[0]
    values = np.empty((masks.shape[0], predictor.n_classes))
    for start in range(0, masks.shape[0], COALITION_BATCH):
        chunk = masks[start : start + COALITION_BATCH]
        hybrid = np.where(chunk[:, None, :], x[None, None, :], background[None, :, :])
        probs = predictor.predict_proba(hybrid.reshape(-1, x.shape[0]))
        values[start : start + len(chunk)] = probs.reshape(len(chunk), n_bg, -1).mean(axis=1)
    return values


def solve_kernel_shap(
    masks: np.ndarray,
    weights: np.ndarray,
    values: np.ndarray,
    base: np.ndarray,
    fx: np.ndarray,
    ridge: float = 1e-8,
) -> np.ndarray:
    """
    Constrained weighted least squares for every class at once.

    Returns:
        Array (n_classes, M) of SHAP values whose rows sum to ``fx - base``
    """
    M = masks.shape[1]
    total = fx - base
    if M == 1:
        return total.reshape(-1, 1)

    z = masks.astype(float)
    z_last = z[:, -1:]
    design = z[:, :-1] - z_last
    target = (values - base) - z_last * total

    weighted = design * weights[:, None]
    gram = design.T @ weighted + ridge * np.eye(M - 1)
    rhs = weighted.T @ target
    phi_head = np.linalg.solve(gram, rhs)
    phi_last = total - phi_head.sum(axis=0)
    return np.vstack([phi_head, phi_last]).T


def sample_background(matrix: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Seeded background subset in row order; the whole matrix when size >= rows."""
    if matrix.shape[0] == 0:
        raise ValidationError("Background must not be empty", field="background")
    if size >= matrix.shape[0]:
        return np.array(matrix, dtype=float)
    rng = np.random.default_rng(seed)
    return np.array(matrix[np.sort(rng.choice(matrix.shape[0], size=size, replace=False))])


def shap_values(
    predictor: Predictor,
    instances: Sequence[Sequence[float]],
    background: Sequence[Sequence[float]],
    cfg: Optional[ShapConfig] = None,
    workers: int = 1,
    feature_names: Optional[List[str]] = None,
) -> ShapTensor:
    """
    Explain every instance for every class output of ``predictor``.

    Args:
        predictor: Black-box model
        instances: Rows to explain
        background: Rows imputing features outside a coalition
        cfg: Engine settings
        workers: Parallel instance jobs; results do not depend on it
        feature_names: Column names stored on the tensor

    Returns:
        ShapTensor indexed [sample][class][feature]

    Raises:
        ValidationError: Empty background, feature-count mismatch or a
            sample budget below twice the feature count
    """
    cfg = cfg or ShapConfig()
    M = predictor.n_features
    X = validate_matrix(instances, M, field="instances")
    B = validate_matrix(background, M, field="background")
    if B.shape[0] == 0:
        raise ValidationError("Background must not be empty", field="background")

    exact = uses_exact_mode(M, cfg)
    if not exact and cfg.sample_budget < 2 * M:
        raise ValidationError(
            f"sample_budget must be at least 2 * n_features ({2 * M})", field="sample_budget"
        )

    started = time.time()
    base = predictor.predict_proba(B).mean(axis=0)
    fxs = predictor.predict_proba(X) if X.shape[0] else np.empty((0, predictor.n_classes))
    shared = exact_coalitions(M) if exact and M > 1 else None

    def explain_one(index: int) -> np.ndarray:
        if M == 1:
            return (fxs[index] - base).reshape(-1, 1)
        if shared is not None:
            masks, weights = shared
        else:
            rng = np.random.default_rng([cfg.seed, index])
            masks, weights = sampled_coalitions(M, cfg.sample_budget, rng)
        values = coalition_values(predictor, X[index], B, masks)
        return solve_kernel_shap(masks, weights, values, base, fxs[index], cfg.ridge)

    results = parallel_map(explain_one, range(X.shape[0]), workers=workers)
    tensor_values = (
        np.stack(results) if results else np.empty((0, predictor.n_classes, M))
    )

    perf_logger.log_operation_time(
        "shap_values",
        time.time() - started,
        {"instances": X.shape[0], "background": B.shape[0], "exact": exact, "features": M},
    )
    return ShapTensor(values=tensor_values, base_values=base, feature_names=feature_names or [])


def global_importance(tensor: ShapTensor) -> Dict[int, List[Tuple[int, float]]]:
    """
    Mean |SHAP| per class and feature, ranked descending.

    Ties keep ascending feature index.
    """
    if tensor.n_samples == 0:
        raise ValidationError("SHAP tensor is empty", field="tensor")
    means = np.abs(tensor.values).mean(axis=0)
    return {
        c: [
            (f, float(means[c, f]))
            for f in sorted(range(tensor.n_features), key=lambda f: (-means[c, f], f))
        ]
        for c in range(tensor.n_classes)
    }


def feature_ranking(tensor: ShapTensor) -> Dict[int, List[int]]:
    """Per class, feature indices by descending global importance."""
    return {c: [f for f, _ in ranked] for c, ranked in global_importance(tensor).items()}


def local_importance(
    tensor: ShapTensor, sample_index: int, class_index: int = 0
) -> List[Tuple[int, float]]:
    """Signed SHAP values of one sample and class, ordered by |value| descending."""
    if not (0 <= sample_index < tensor.n_samples):
        raise ValidationError(
            f"Sample index {sample_index} out of range [0, {tensor.n_samples})",
            field="sample_index",
        )
    if not (0 <= class_index < tensor.n_classes):
        raise ValidationError(
            f"Class index {class_index} out of range [0, {tensor.n_classes})",
            field="class_index",
        )
    row = tensor.values[sample_index, class_index]
    order = sorted(range(tensor.n_features), key=lambda f: (-abs(row[f]), f))
    return [(f, float(row[f])) for f in order]


def beeswarm_export(tensor: ShapTensor, ds: ProcessedDataset) -> pd.DataFrame:
    """
    Flat plot records, one per (class, feature, sample).

    Columns: class, feature, sample, shap_value, feature_value.
    """
    if len(ds) != tensor.n_samples or ds.n_features != tensor.n_features:
        raise ValidationError("Dataset is not aligned with the SHAP tensor", field="tensor")
    n, C, M = tensor.values.shape
    classes, features, samples = np.meshgrid(
        np.arange(C), np.arange(M), np.arange(n), indexing="ij"
    )
    return pd.DataFrame(
        {
            "class": classes.ravel(),
            "feature": [ds.feature_names[f] for f in features.ravel()],
            "sample": samples.ravel(),
            "shap_value": tensor.values.transpose(1, 2, 0).ravel(),
            "feature_value": ds.matrix[samples.ravel(), features.ravel()],
        }
    )
