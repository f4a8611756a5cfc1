"""
Tabular data ingestion and preprocessing.

CSV files are loaded into a :class:`Dataset`, categorical columns are label
encoded and every feature is scaled to [0, 1] so the attack perturbs all
features on a common scale.
"""

import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from evade_lite.domain.entities import (
    Dataset,
    FeatureKind,
    FeatureScaling,
    FeatureSchema,
    PreprocessorState,
    ProcessedDataset,
)
from evade_lite.utils.exceptions import IngestionError, TransformError, ValidationError
from evade_lite.utils.logging import get_logger
from evade_lite.utils.validation import validate_fraction

logger = get_logger(__name__)

_LINE_PATTERN = re.compile(r"line (\d+)")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _label_sort_key(label: str) -> Tuple[int, float, str]:
    # numeric labels order numerically ("2" < "10"), text labels lexicographically
    if _is_number(label):
        return (0, float(label), label)
    return (1, 0.0, label)


def load_csv(
    path: Union[str, Path],
    header_mode: str = "auto",
    delimiter: str = ",",
    label_column: Union[str, int] = -1,
    categorical: Iterable[str] = (),
    categories: Optional[Dict[str, List[str]]] = None,
) -> Dataset:
    """
    Load a comma-separated file into a :class:`Dataset`.

    Args:
        path: CSV file
        header_mode: ``auto`` (header when every cell of the first row is
            non-numeric), ``present`` or ``absent``
        delimiter: Field separator
        label_column: Name or index of the class column (default: last)
        categorical: Column names forced to categorical
        categories: Declared category lists per column

    Returns:
        Dataset with inferred schema; a column is categorical when any cell
        is non-numeric

    Raises:
        IngestionError: Unreadable path, empty file, ragged rows or missing cells
    """
    path = Path(path)
    if header_mode not in ("auto", "present", "absent"):
        raise ValidationError(f"Unknown header mode: {header_mode}", field="header_mode")
    if not path.is_file():
        raise IngestionError(f"Cannot read CSV file: {path}", path=str(path))

    try:
        raw = pd.read_csv(
            path,
            header=None,
            sep=delimiter,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{path}: no data rows", path=str(path)) from None
    except pd.errors.ParserError as e:
        match = _LINE_PATTERN.search(str(e))
        row = int(match.group(1)) if match else None
        raise IngestionError(
            f"{path}: ragged row at line {row}: {e}", path=str(path), row=row
        ) from None
    except (OSError, UnicodeDecodeError) as e:
        raise IngestionError(f"Cannot read CSV file {path}: {e}", path=str(path)) from None

    raw = raw.apply(lambda col: col.map(lambda v: v.strip() if isinstance(v, str) else v))
    first_row = [str(v) for v in raw.iloc[0].tolist()] if len(raw) else []

    has_header = header_mode == "present" or (
        header_mode == "auto"
        and bool(first_row)
        and all(cell != "" and not _is_number(cell) for cell in first_row)
    )
    if has_header:
        names = first_row
        body = raw.iloc[1:].reset_index(drop=True)
        line_offset = 2
    else:
        names = [f"x{i}" for i in range(raw.shape[1])]
        body = raw
        line_offset = 1
    if len(set(names)) != len(names):
        raise IngestionError(f"{path}: duplicate column names", path=str(path))
    body.columns = names

    if len(body) == 0:
        raise IngestionError(f"{path}: no data rows", path=str(path))

    missing = body.isna() | (body == "")
    if missing.values.any():
        row_pos, col_pos = np.argwhere(missing.values)[0]
        raise IngestionError(
            f"{path}: missing cell at line {row_pos + line_offset}, column {names[col_pos]}",
            path=str(path),
            row=int(row_pos + line_offset),
            column=names[col_pos],
        )
    if len(names) < 2:
        raise IngestionError(f"{path}: need at least one feature and a label", path=str(path))

    if isinstance(label_column, int):
        try:
            label_name = names[label_column]
        except IndexError:
            raise ValidationError(
                f"Label column index {label_column} out of range", field="label_column"
            ) from None
    else:
        if label_column not in names:
            raise ValidationError(f"Unknown label column: {label_column}", field="label_column")
        label_name = label_column

    forced = set(categorical)
    declared = categories or {}
    unknown = (forced | set(declared)) - set(names)
    if unknown:
        raise ValidationError(
            f"Schema hints name unknown columns: {sorted(unknown)}", field="categorical"
        )

    schema: List[FeatureSchema] = []
    columns: Dict[str, pd.Series] = {}
    for name in names:
        if name == label_name:
            continue
        cells = body[name]
        is_categorical = name in forced or name in declared or not all(map(_is_number, cells))
        if is_categorical:
            labels = list(declared.get(name, sorted(set(cells))))
            schema.append(FeatureSchema(name, FeatureKind.CATEGORICAL, tuple(labels)))
            columns[name] = cells.astype(str)
        else:
            schema.append(FeatureSchema(name, FeatureKind.NUMERIC))
            columns[name] = cells.astype(float)

    frame = pd.DataFrame(columns, columns=[f.name for f in schema])
    dataset = Dataset(schema=schema, frame=frame, labels=body[label_name].astype(str).tolist())
    logger.info(
        "CSV loaded",
        path=str(path),
        rows=len(dataset),
        features=len(schema),
        categorical=sum(f.is_categorical for f in schema),
    )
    return dataset


def fit_preprocessor(train: Dataset) -> PreprocessorState:
    """
    Fit min/max scaling and label encodings on the training split.

    Categorical indices follow lexicographic label order unless the schema
    declares its own category list. A numeric feature with max == min is
    recorded as constant and transforms to 0.0.

    Raises:
        ValidationError: Empty training set
        TransformError: Non-finite numeric cell
    """
    if len(train) == 0:
        raise ValidationError("Cannot fit a preprocessor on an empty dataset", field="train")

    features: List[FeatureScaling] = []
    for spec in train.schema:
        column = train.frame[spec.name]
        if spec.is_categorical:
            labels = list(spec.categories) if spec.categories else sorted(set(column))
            features.append(FeatureScaling(spec.name, spec.kind, categories=labels))
        else:
            values = column.to_numpy(dtype=float)
            if not np.all(np.isfinite(values)):
                raise TransformError(
                    f"Feature {spec.name} contains a non-finite value", feature=spec.name
                )
            features.append(
                FeatureScaling(spec.name, spec.kind, float(values.min()), float(values.max()))
            )

    class_labels = sorted(set(train.labels), key=_label_sort_key)
    state = PreprocessorState(features=features, class_labels=class_labels)
    logger.debug(
        "Preprocessor fitted",
        features=len(features),
        constant=[f.name for f in features if f.is_constant],
        classes=class_labels,
    )
    return state


def _scale_numeric(values: np.ndarray, scaling: FeatureScaling) -> np.ndarray:
    if scaling.is_constant:
        return np.zeros_like(values, dtype=float)
    span = scaling.maximum - scaling.minimum
    return np.clip((values - scaling.minimum) / span, 0.0, 1.0)


def transform(state: PreprocessorState, ds: Dataset) -> ProcessedDataset:
    """
    Encode and scale a dataset with a fitted state.

    Raises:
        ValidationError: Schema does not match the state
        TransformError: Unseen categorical or class label, non-finite numeric cell
    """
    if ds.feature_names != state.feature_names:
        raise ValidationError("Dataset schema does not match the preprocessor", field="schema")

    matrix = np.zeros((len(ds), len(state.features)), dtype=float)
    for j, scaling in enumerate(state.features):
        column = ds.frame[scaling.name]
        if scaling.kind == FeatureKind.NUMERIC:
            values = column.to_numpy(dtype=float)
            if not np.all(np.isfinite(values)):
                raise TransformError(
                    f"Feature {scaling.name} contains a non-finite value", feature=scaling.name
                )
            matrix[:, j] = _scale_numeric(values, scaling)
            continue
        index = {label: i for i, label in enumerate(scaling.categories)}
        k = len(scaling.categories)
        for r, label in enumerate(column):
            if label not in index:
                raise TransformError(
                    f"Unseen label {label!r} in feature {scaling.name}",
                    feature=scaling.name,
                    label=label,
                )
            matrix[r, j] = index[label] / (k - 1) if k > 1 else 0.0

    class_index = {label: i for i, label in enumerate(state.class_labels)}
    labels = []
    for label in ds.labels:
        if label not in class_index:
            raise TransformError(f"Unseen class label {label!r}", feature="label", label=label)
        labels.append(class_index[label])

    schema = [
        FeatureSchema(f.name, f.kind, tuple(f.categories)) for f in state.features
    ]
    return ProcessedDataset(
        matrix=matrix,
        labels=np.asarray(labels, dtype=int),
        n_classes=state.n_classes,
        schema=schema,
        class_names=list(state.class_labels),
    )


def inverse_transform(state: PreprocessorState, row: Sequence[float]) -> List[Union[float, str]]:
    """Map a normalized row back to raw feature values (values clamped to [0, 1])."""
    if len(row) != len(state.features):
        raise ValidationError(
            f"Row has {len(row)} values, schema has {len(state.features)}", field="row"
        )
    raw: List[Union[float, str]] = []
    for value, scaling in zip(row, state.features):
        v = min(max(float(value), 0.0), 1.0)
        if scaling.kind == FeatureKind.NUMERIC:
            raw.append(scaling.minimum + v * (scaling.maximum - scaling.minimum))
        else:
            k = len(scaling.categories)
            raw.append(scaling.categories[int(math.floor(v * (k - 1) + 0.5))])
    return raw


def schema_from_state(state: PreprocessorState) -> List[FeatureSchema]:
    """Rebuild the feature schema recorded in a preprocessor state."""
    return [FeatureSchema(f.name, f.kind, tuple(f.categories)) for f in state.features]


def split_indices(n_rows: int, test_fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """
    Deterministic shuffled partition of ``range(n_rows)``.

    Both parts are returned in ascending row order.
    """
    validate_fraction(test_fraction)
    rng = np.random.default_rng(seed)
    permutation = rng.permutation(n_rows)
    n_test = int(round(n_rows * test_fraction))
    if n_rows >= 2:
        n_test = min(max(n_test, 1), n_rows - 1)
    test = sorted(int(i) for i in permutation[:n_test])
    train = sorted(int(i) for i in permutation[n_test:])
    return train, test


def split(
    ds: ProcessedDataset, test_fraction: float = 1 / 3, seed: int = 42
) -> Tuple[ProcessedDataset, ProcessedDataset]:
    """Split a processed dataset into (train, test)."""
    train_idx, test_idx = split_indices(len(ds), test_fraction, seed)
    return ds.take(train_idx), ds.take(test_idx)


def subsample_indices(n_rows: int, size: Optional[int], seed: int) -> List[int]:
    """Seeded subset of ``size`` rows in ascending order; all rows when size is None."""
    if size is None or size >= n_rows:
        return list(range(n_rows))
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(n_rows, size=size, replace=False))


def processed_to_frame(ds: ProcessedDataset) -> pd.DataFrame:
    """Processed matrix with a trailing ``label`` column."""
    frame = pd.DataFrame(ds.matrix, columns=ds.feature_names)
    frame["label"] = ds.labels
    return frame


def processed_from_frame(
    frame: pd.DataFrame, state: PreprocessorState
) -> ProcessedDataset:
    """Inverse of :func:`processed_to_frame`."""
    return ProcessedDataset(
        matrix=frame[state.feature_names].to_numpy(dtype=float),
        labels=frame["label"].to_numpy(dtype=int),
        n_classes=state.n_classes,
        schema=schema_from_state(state),
        class_names=list(state.class_labels),
    )
