"""
Report exports: sorted CSV/JSON tables and SVG charts.
"""

import io
import json
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from evade_lite.domain.entities import (  # noqa: E402
    AccuracyImpact,
    EfficacyReport,
    SaturationReport,
    ShapTensor,
)
from evade_lite.domain.explain import global_importance, local_importance  # noqa: E402
from evade_lite.utils.exceptions import ReportGenerationError  # noqa: E402
from evade_lite.utils.logging import get_logger  # noqa: E402

from .repositories import atomic_write_text  # noqa: E402

logger = get_logger(__name__)

Report = Union[EfficacyReport, SaturationReport, AccuracyImpact]

# Stable SVG ids and no timestamp, so reruns produce identical files.
plt.rcParams["svg.hashsalt"] = "evade-lite"
SVG_METADATA = {"Date": None}


def report_frame(report: Report) -> pd.DataFrame:
    return pd.DataFrame(report.rows(), columns=list(report.columns))


def export_report(report: Report, path: Union[str, Path], format: str = "csv") -> Path:
    """
    Write a report sorted by its key columns.

    Raises:
        ReportGenerationError: Unknown format or IO failure
    """
    path = Path(path)
    frame = report_frame(report)
    if format == "csv":
        text = frame.to_csv(index=False, lineterminator="\n")
    elif format == "json":
        text = json.dumps(frame.to_dict(orient="records"), indent=2) + "\n"
    else:
        raise ReportGenerationError(f"Unknown report format: {format}", report_type=format)
    atomic_write_text(path, text)
    logger.info("Report exported", path=str(path), rows=len(frame), format=format)
    return path


def global_importance_frame(tensor: ShapTensor) -> pd.DataFrame:
    """Columns: class, rank, feature, mean_abs_shap."""
    rows = [
        (c, rank, tensor.feature_names[f], value)
        for c, ranked in global_importance(tensor).items()
        for rank, (f, value) in enumerate(ranked, start=1)
    ]
    return pd.DataFrame(rows, columns=["class", "rank", "feature", "mean_abs_shap"])


def local_importance_frame(tensor: ShapTensor, sample_indices: Sequence[int]) -> pd.DataFrame:
    """Columns: sample, class, rank, feature, shap_value."""
    rows = [
        (s, c, rank, tensor.feature_names[f], value)
        for s in sample_indices
        for c in range(tensor.n_classes)
        for rank, (f, value) in enumerate(local_importance(tensor, s, c), start=1)
    ]
    return pd.DataFrame(rows, columns=["sample", "class", "rank", "feature", "shap_value"])


def _save_svg(fig: "plt.Figure", path: Path) -> Path:
    buffer = io.StringIO()
    try:
        fig.savefig(buffer, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    finally:
        plt.close(fig)
    atomic_write_text(path, buffer.getvalue())
    logger.debug("Chart written", path=str(path))
    return path


def plot_global_importance(tensor: ShapTensor, path: Union[str, Path]) -> Path:
    """One horizontal bar panel of mean |SHAP| per class."""
    frame = global_importance_frame(tensor)
    fig, axes = plt.subplots(
        1, tensor.n_classes, figsize=(4 * tensor.n_classes, 0.4 * tensor.n_features + 1.5),
        squeeze=False,
    )
    for c, ax in enumerate(axes[0]):
        sns.barplot(data=frame[frame["class"] == c], x="mean_abs_shap", y="feature", ax=ax, color="#3b75af")
        ax.set_title(f"class {c}")
        ax.set_xlabel("mean |SHAP|")
    return _save_svg(fig, Path(path))


def plot_beeswarm(records: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Per-class strip plot of SHAP values, coloured by feature value."""
    classes = sorted(records["class"].unique())
    n_features = records["feature"].nunique()
    fig, axes = plt.subplots(
        1, len(classes), figsize=(5 * len(classes), 0.4 * n_features + 1.5), squeeze=False
    )
    for c, ax in zip(classes, axes[0]):
        part = records[records["class"] == c]
        sns.stripplot(
            data=part, x="shap_value", y="feature", hue="feature_value",
            palette="coolwarm", size=3, jitter=0.25, legend=False, ax=ax,
        )
        ax.axvline(0.0, color="grey", linewidth=0.8)
        ax.set_title(f"class {c}")
    return _save_svg(fig, Path(path))


def plot_efficacy(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Efficacy over epsilon per target class, from efficacy report rows."""
    frame = frame.copy()
    frame["target_class"] = frame["target_class"].astype(str)
    fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=frame, x="epsilon", y="efficacy", hue="target_class", style="model", marker="o", ax=ax)
    ax.set_ylim(-0.02, 1.02)
    return _save_svg(fig, Path(path))


def plot_saturation(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    frame = frame.copy()
    frame["epsilon"] = frame["epsilon"].astype(str)
    fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=frame, x="k", y="efficacy", hue="epsilon", marker="o", ax=ax)
    ax.set_xlabel("features allowed (k)")
    ax.set_ylim(-0.02, 1.02)
    return _save_svg(fig, Path(path))


def summary_rows(report: Report) -> Tuple[List[str], List[List[str]]]:
    """Header and stringified rows for console tables."""
    formatted: List[List[str]] = []
    for row in report.rows():
        formatted.append([f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    return list(report.columns), formatted

