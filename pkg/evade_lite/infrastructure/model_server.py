"""
Serve a model over the newline-delimited JSON protocol on stdin/stdout.

Run as ``python -m evade_lite.infrastructure.model_server --model model.json``
or ``evade-lite serve``. With ``--constant-class`` the server answers every
instance with a fixed class (conformance fixture). With ``--request-log`` every
served request is appended as ``{"op", "rows"}`` to a JSON-lines file.
"""

import json
import sys
import threading
from pathlib import Path
from typing import IO, Any, Dict, Optional, Union

import click
import numpy as np
from pydantic import ValidationError as PydanticValidationError

from evade_lite.api.schemas import ErrorReply, MetaReply, PredictReply, WireRequest
from evade_lite.domain.interfaces import Predictor
from evade_lite.utils.exceptions import EvadeException
from evade_lite.utils.logging import get_logger, setup_logging

logger = get_logger(__name__)


class ConstantModel(Predictor):
    """Puts probability 1 on one fixed class for every row."""

    kind = "constant"

    def __init__(self, n_features: int, n_classes: int, label: int = 0, name: str = ""):
        super().__init__(n_features, n_classes, name)
        if not (0 <= label < n_classes):
            raise ValueError(f"constant class {label} outside [0, {n_classes})")
        self.label = label

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        out = np.zeros((matrix.shape[0], self.n_classes))
        out[:, self.label] = 1.0
        return out


class RequestLog:
    """Append-only JSON-lines record of served requests."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.served = 0
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, op: str, rows: int) -> None:
        with self._lock:
            self.served += 1
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"op": op, "rows": rows}) + "\n")


def read_request_log(path: Union[str, Path]) -> int:
    """Total rows of all predict requests in a request log."""
    total = 0
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entry = json.loads(line)
            if entry["op"] == "predict":
                total += int(entry["rows"])
    return total


def handle_request(
    message: Dict[str, Any], predictor: Predictor, request_log: Optional[RequestLog] = None
) -> Dict[str, Any]:
    """
    Answer one protocol message.

    Raises:
        pydantic.ValidationError: Malformed request
        EvadeException: Instances the model rejects
    """
    request = WireRequest.model_validate(message)
    if request.op == "meta":
        if request_log:
            request_log.record("meta", 0)
        return MetaReply(
            n_features=predictor.n_features, n_classes=predictor.n_classes
        ).model_dump()

    instances = request.instances or []
    if instances:
        probabilities = predictor.predict_proba(instances)
    else:
        probabilities = np.empty((0, predictor.n_classes))
    if request_log:
        request_log.record("predict", len(instances))
    return PredictReply(
        labels=np.argmax(probabilities, axis=1).tolist() if len(instances) else [],
        probabilities=probabilities.tolist(),
    ).model_dump()


def serve_stdio(
    predictor: Predictor,
    stdin: Optional[IO[str]] = None,
    stdout: Optional[IO[str]] = None,
    request_log: Optional[RequestLog] = None,
) -> int:
    """
    Answer requests line by line until stdin closes.

    Returns:
        Number of requests answered
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    answered = 0
    logger.info("Model server ready", model=predictor.describe())
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            reply = handle_request(json.loads(line), predictor, request_log)
        except json.JSONDecodeError as e:
            reply = ErrorReply(error=f"Malformed JSON: {e}").model_dump()
        except PydanticValidationError as e:
            first = e.errors()[0]
            reply = ErrorReply(
                error=f"Invalid request: {first.get('msg')}",
                details={"field": ".".join(str(p) for p in first.get("loc", ()))},
            ).model_dump()
        except EvadeException as e:
            reply = ErrorReply(
                error=e.message, error_code=e.error_code, details=e.details
            ).model_dump()
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
        answered += 1
    logger.info("Model server stopped", requests=answered)
    return answered


def build_served_model(
    model_path: Optional[Path], constant_class: Optional[int], n_features: int, n_classes: int
) -> Predictor:
    if constant_class is not None:
        return ConstantModel(n_features, n_classes, constant_class, name="constant")
    if model_path is None:
        raise click.UsageError("either --model or --constant-class is required")
    from .model_store import load_model

    return load_model(model_path)


@click.command()
@click.option("--model", "model_path", type=click.Path(path_type=Path), help="Saved model JSON")
@click.option("--constant-class", type=int, help="Answer every row with this class")
@click.option("--n-features", type=int, default=4, show_default=True, help="Constant mode width")
@click.option("--n-classes", type=int, default=3, show_default=True, help="Constant mode classes")
@click.option("--request-log", type=click.Path(path_type=Path), help="JSON-lines request log")
@click.option("--log-level", default="WARNING", show_default=True)
def main(
    model_path: Optional[Path],
    constant_class: Optional[int],
    n_features: int,
    n_classes: int,
    request_log: Optional[Path],
    log_level: str,
) -> None:
    """Serve a model over stdin/stdout."""
    setup_logging(log_level)
    predictor = build_served_model(model_path, constant_class, n_features, n_classes)
    serve_stdio(predictor, request_log=RequestLog(request_log))


if __name__ == "__main__":
    main()
