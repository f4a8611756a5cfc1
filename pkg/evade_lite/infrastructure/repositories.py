"""
Artifact store of a campaign run directory.

Every pipeline stage reads its inputs from and writes its outputs to one
output directory. Files are written through a temporary sibling and renamed,
so an interrupted stage never leaves a truncated artifact behind.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from evade_lite.domain.entities import (
    ConciseSSD,
    ConversionTable,
    PreprocessorState,
    ProcessedDataset,
    ShapTensor,
)
from evade_lite.domain.interfaces import Predictor
from evade_lite.utils.exceptions import ArtifactNotFoundError, ReportGenerationError
from evade_lite.utils.logging import get_logger

from .dataset import processed_from_frame, processed_to_frame
from .model_store import load_model, save_model

logger = get_logger(__name__)

PREPROCESSOR = "preprocessor.json"
SPLIT_MANIFEST = "split.json"
TRAIN = "train.csv"
TEST = "test.csv"
MODEL = "model.json"
SHAP_VALUES = "shap_values.csv"
SHAP_BASE = "shap_base_values.json"
CONCISE_SSD = "concise_ssd.json"
CONVERSION_TABLE = "conversion_table.json"
FEATURE_RANKING = "feature_ranking.json"


def atomic_write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise ReportGenerationError(f"Cannot write {path}: {e}", report_type=path.suffix) from e
    return path


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


class ArtifactRepository:
    """Named artifacts of one run directory."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def require(self, name: str) -> Path:
        path = self.path(name)
        if not path.is_file():
            raise ArtifactNotFoundError(str(path))
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = atomic_write_text(self.path(name), text)
        logger.debug("Artifact written", artifact=name, path=str(path))
        return path

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, dump_json(data))

    def read_json(self, name: str) -> Any:
        return json.loads(self.require(name).read_text(encoding="utf-8"))

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        return self.write_text(name, frame.to_csv(index=False, lineterminator="\n"))

    def read_frame(self, name: str) -> pd.DataFrame:
        return pd.read_csv(self.require(name), float_precision="round_trip")

    def write_jsonl(self, name: str, records: List[Dict[str, Any]]) -> Path:
        return self.write_text(name, "".join(json.dumps(r) + "\n" for r in records))

    # prepare

    def save_state(self, state: PreprocessorState) -> Path:
        return self.write_json(PREPROCESSOR, state.to_dict())

    def load_state(self) -> PreprocessorState:
        return PreprocessorState.from_dict(self.read_json(PREPROCESSOR))

    def save_split(
        self, train_indices: List[int], test_indices: List[int], seed: int, test_fraction: float
    ) -> Path:
        return self.write_json(
            SPLIT_MANIFEST,
            {
                "seed": seed,
                "test_fraction": test_fraction,
                "n_rows": len(train_indices) + len(test_indices),
                "train_indices": train_indices,
                "test_indices": test_indices,
            },
        )

    def save_processed(self, name: str, ds: ProcessedDataset) -> Path:
        return self.write_frame(name, processed_to_frame(ds))

    def load_processed(self, name: str, state: Optional[PreprocessorState] = None) -> ProcessedDataset:
        state = state or self.load_state()
        return processed_from_frame(self.read_frame(name), state)

    # train

    def save_model(self, model: Predictor) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return save_model(model, self.path(MODEL))

    def load_model(self) -> Predictor:
        return load_model(self.require(MODEL))

    # explain

    def save_tensor(self, tensor: ShapTensor, explained: Dict[str, Any]) -> None:
        """SHAP values as long CSV plus a JSON sidecar of base values and row provenance."""
        n, C, M = tensor.values.shape
        samples, classes, features = np.meshgrid(
            np.arange(n), np.arange(C), np.arange(M), indexing="ij"
        )
        frame = pd.DataFrame(
            {
                "sample": samples.ravel(),
                "class": classes.ravel(),
                "feature": [tensor.feature_names[f] for f in features.ravel()],
                "value": tensor.values.ravel(),
            }
        )
        self.write_frame(SHAP_VALUES, frame)
        self.write_json(
            SHAP_BASE,
            {
                "base_values": tensor.base_values.tolist(),
                "feature_names": tensor.feature_names,
                "n_samples": n,
                **explained,
            },
        )

    def load_tensor(self) -> Tuple[ShapTensor, Dict[str, Any]]:
        sidecar = self.read_json(SHAP_BASE)
        frame = self.read_frame(SHAP_VALUES)
        names = sidecar["feature_names"]
        n, C, M = sidecar["n_samples"], len(sidecar["base_values"]), len(names)
        values = frame["value"].to_numpy(dtype=float).reshape(n, C, M)
        tensor = ShapTensor(values=values, base_values=sidecar["base_values"], feature_names=names)
        return tensor, sidecar

    # analyze

    def save_analysis(
        self, concise: ConciseSSD, table: ConversionTable
    ) -> None:
        self.write_json(CONCISE_SSD, concise.to_dict())
        self.write_json(CONVERSION_TABLE, table.to_dict())
        self.write_json(
            FEATURE_RANKING,
            {str(c): [table.feature_names[f] for f in ranked] for c, ranked in sorted(table.feature_ranking.items())},
        )

    def load_table(self, feature_names: List[str]) -> ConversionTable:
        index = {name: i for i, name in enumerate(feature_names)}
        ranking: Dict[int, List[int]] = {}
        if self.exists(FEATURE_RANKING):
            ranking = {
                int(c): [index[name] for name in names]
                for c, names in self.read_json(FEATURE_RANKING).items()
            }
        return ConversionTable.from_dict(self.read_json(CONVERSION_TABLE), feature_names, ranking)
