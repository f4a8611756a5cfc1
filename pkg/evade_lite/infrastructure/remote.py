"""
External black-box models over the JSON wire protocol.

A :class:`RemotePredictor` learns the model dimensions from a metadata
handshake and afterwards behaves like any local predictor. Requests larger
than ``batch_limit`` rows are split and the replies concatenated in order.
"""

import json
import queue
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import requests
from pydantic import ValidationError as PydanticValidationError

from evade_lite.api.schemas import MetaReply, PredictReply
from evade_lite.domain.interfaces import Predictor
from evade_lite.schemas import RemoteModelConfig
from evade_lite.utils.exceptions import ProtocolError, RemoteConnectionError
from evade_lite.utils.logging import get_logger
from evade_lite.utils.validation import validate_distribution_rows, validate_matrix

logger = get_logger(__name__)


class Transport(ABC):
    """One connection carrying one request at a time."""

    target: str = ""

    @abstractmethod
    def exchange(self, message: Dict[str, Any]) -> Dict[str, Any]:
        """Send one message and wait for its reply."""

    def close(self) -> None:
        pass


def _decode_reply(raw: str, target: str) -> Dict[str, Any]:
    try:
        reply = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"Malformed reply from {target}: {e}", field="reply") from None
    if not isinstance(reply, dict):
        raise ProtocolError(f"Reply from {target} is not a JSON object", field="reply")
    if "error" in reply:
        raise ProtocolError(f"{target} rejected the request: {reply['error']}", field="error")
    return reply


class SubprocessTransport(Transport):
    """Child process speaking the protocol on its stdin/stdout."""

    def __init__(self, command: Sequence[str], timeout: float):
        self.command = list(command)
        self.target = " ".join(self.command)
        self.timeout = timeout
        self.broken: Optional[str] = None
        try:
            self.process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise RemoteConnectionError(f"Cannot spawn {self.target}: {e}", target=self.target) from e

        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _fail(self, reason: str) -> RemoteConnectionError:
        """Kill the child; a late reply must never answer a later request."""
        self.broken = reason
        self._kill()
        logger.warning("Remote model connection dropped", target=self.target, reason=reason)
        return RemoteConnectionError(reason, target=self.target)

    def _kill(self) -> None:
        if self.process.poll() is None:
            self.process.kill()
            self.process.wait()

    def exchange(self, message: Dict[str, Any]) -> Dict[str, Any]:
        if self.broken:
            raise RemoteConnectionError(
                f"Connection to {self.target} is unusable: {self.broken}", target=self.target
            )
        if self.process.poll() is not None:
            raise RemoteConnectionError(
                f"{self.target} exited with status {self.process.returncode}", target=self.target
            )
        try:
            self.process.stdin.write(json.dumps(message) + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise RemoteConnectionError(f"Cannot write to {self.target}: {e}", target=self.target) from e

        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise self._fail(f"{self.target} did not answer within {self.timeout}s") from None
        if line is None:
            raise self._fail(f"{self.target} closed its output")
        return _decode_reply(line, self.target)

    def close(self) -> None:
        if self.process.poll() is None:
            try:
                self.process.stdin.close()
                self.process.wait(timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired):
                self.process.kill()
                self.process.wait()


class HttpTransport(Transport):
    """Protocol messages as HTTP POST bodies."""

    def __init__(self, url: str, timeout: float):
        self.target = url
        self.timeout = timeout
        self.session = requests.Session()

    def exchange(self, message: Dict[str, Any]) -> Dict[str, Any]:
        try:
            response = self.session.post(self.target, json=message, timeout=self.timeout)
        except requests.RequestException as e:
            raise RemoteConnectionError(f"Cannot reach {self.target}: {e}", target=self.target) from e
        if response.status_code >= 400:
            raise ProtocolError(
                f"{self.target} answered HTTP {response.status_code}: {response.text[:200]}",
                field="status",
            )
        return _decode_reply(response.text, self.target)

    def close(self) -> None:
        self.session.close()


def _first_field(error: PydanticValidationError) -> str:
    loc = error.errors()[0].get("loc", ())
    return ".".join(str(part) for part in loc) or "reply"


class RemotePredictor(Predictor):
    """Predictor backed by a remote model."""

    kind = "remote"

    def __init__(self, transport: Transport, cfg: RemoteModelConfig):
        self.transport = transport
        self.batch_limit = cfg.batch_limit
        self._io_lock = threading.Lock()

        reply = transport.exchange({"op": "meta"})
        try:
            meta = MetaReply.model_validate(reply)
        except PydanticValidationError as e:
            field = _first_field(e)
            raise ProtocolError(
                f"Handshake reply from {transport.target} is invalid: field {field!r}", field=field
            ) from None
        super().__init__(meta.n_features, meta.n_classes, cfg.name)
        logger.info(
            "Remote model attached",
            target=transport.target,
            n_features=self.n_features,
            n_classes=self.n_classes,
        )

    def _request(self, chunk: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        message = {"op": "predict", "instances": chunk.tolist()}
        try:
            with self._io_lock:
                reply = self.transport.exchange(message)
        except RemoteConnectionError as e:
            raise ProtocolError(f"Prediction request failed: {e.message}", field="timeout") from e
        try:
            parsed = PredictReply.model_validate(reply)
        except PydanticValidationError as e:
            raise ProtocolError("Malformed prediction reply", field=_first_field(e)) from None

        n = chunk.shape[0]
        if len(parsed.labels) != n or len(parsed.probabilities) != n:
            raise ProtocolError(
                f"Sent {n} rows, got {len(parsed.labels)} labels and "
                f"{len(parsed.probabilities)} probability rows",
                field="length",
            )
        probabilities = (
            validate_distribution_rows(parsed.probabilities, self.n_classes)
            if n
            else np.empty((0, self.n_classes))
        )
        return np.asarray(parsed.labels, dtype=int), probabilities

    def _exchange_rows(self, matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        labels: List[np.ndarray] = []
        probabilities: List[np.ndarray] = []
        for start in range(0, matrix.shape[0], self.batch_limit):
            chunk_labels, chunk_probs = self._request(matrix[start : start + self.batch_limit])
            labels.append(chunk_labels)
            probabilities.append(chunk_probs)
        if not labels:
            return np.empty(0, dtype=int), np.empty((0, self.n_classes))
        return np.concatenate(labels), np.vstack(probabilities)

    def _predict_proba(self, matrix: np.ndarray) -> np.ndarray:
        return self._exchange_rows(matrix)[1]

    def remote_predict(self, rows: Sequence[Sequence[float]]) -> Tuple[np.ndarray, np.ndarray]:
        """Server labels and probability rows, counted like ``predict_proba``."""
        matrix = validate_matrix(rows, self.n_features)
        with self._lock:
            self._query_count += matrix.shape[0]
        return self._exchange_rows(matrix)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "target": self.transport.target}

    def close(self) -> None:
        self.transport.close()

    def __enter__(self) -> "RemotePredictor":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def open_transport(cfg: RemoteModelConfig) -> Transport:
    if cfg.transport == "http":
        if not isinstance(cfg.target, str):
            raise RemoteConnectionError("HTTP target must be a URL", target=str(cfg.target))
        return HttpTransport(cfg.target, cfg.timeout)
    command = shlex.split(cfg.target) if isinstance(cfg.target, str) else list(cfg.target)
    if not command:
        raise RemoteConnectionError("Subprocess target is empty", target="")
    return SubprocessTransport(command, cfg.timeout)


def connect(cfg: RemoteModelConfig) -> RemotePredictor:
    """
    Attach a remote model.

    Raises:
        RemoteConnectionError: Unreachable or unspawnable target, handshake timeout
        ProtocolError: Malformed handshake reply
    """
    transport = open_transport(cfg)
    try:
        return RemotePredictor(transport, cfg)
    except Exception:
        transport.close()
        raise


def remote_predict(
    handle: RemotePredictor, rows: Sequence[Sequence[float]]
) -> Tuple[np.ndarray, np.ndarray]:
    """One label and one probability row per input row, in order."""
    return handle.remote_predict(rows)
