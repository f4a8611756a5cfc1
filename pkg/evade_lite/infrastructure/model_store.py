"""
JSON persistence of built-in models: ``{kind, name, n_features, n_classes, parameters}``.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

from evade_lite.domain.interfaces import Predictor
from evade_lite.utils.exceptions import ArtifactNotFoundError, ValidationError
from evade_lite.utils.logging import get_logger

from .classifiers import DecisionTreeModel, LinearSVMModel, LogisticModel

logger = get_logger(__name__)


def model_to_dict(model: Predictor) -> Dict[str, Any]:
    if not isinstance(model, (LogisticModel, DecisionTreeModel, LinearSVMModel)):
        raise ValidationError(f"Model kind {model.kind} cannot be saved", field="model")
    return {
        "kind": model.kind,
        "name": model.name,
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "parameters": model.parameters(),
    }


def model_from_dict(data: Dict[str, Any]) -> Predictor:
    try:
        kind = data["kind"]
        name = data.get("name", "")
        if kind == LogisticModel.kind:
            return LogisticModel.from_parameters(data["parameters"], name)
        if kind == LinearSVMModel.kind:
            return LinearSVMModel.from_parameters(data["parameters"], name)
        if kind == DecisionTreeModel.kind:
            return DecisionTreeModel.from_parameters(
                data["parameters"], int(data["n_features"]), int(data["n_classes"]), name
            )
    except KeyError as e:
        raise ValidationError(f"Model document lacks {e}", field=str(e)) from None
    raise ValidationError(f"Unknown model kind: {kind}", field="kind")


def save_model(model: Predictor, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")
    logger.info("Model saved", kind=model.kind, path=str(path))
    return path


def load_model(path: Union[str, Path]) -> Predictor:
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Model file {path} is not valid JSON: {e}", field="model") from e
    return model_from_dict(data)
