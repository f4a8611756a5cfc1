"""
Tests for the black-box wire protocol: servers, transports and the remote predictor.
"""

import io
import json
import sys

import numpy as np
import pytest
from fastapi.testclient import TestClient

from evade_lite.infrastructure.model_server import (
    ConstantModel,
    RequestLog,
    handle_request,
    read_request_log,
    serve_stdio,
)
from evade_lite.infrastructure.model_store import save_model
from evade_lite.infrastructure.remote import (
    HttpTransport,
    RemotePredictor,
    Transport,
    connect,
    remote_predict,
)
from evade_lite.main import create_app
from evade_lite.schemas import RemoteModelConfig
from evade_lite.utils.exceptions import ProtocolError, RemoteConnectionError


def server_command(*args):
    return [sys.executable, "-m", "evade_lite.infrastructure.model_server", *args]


# Answers the handshake at once, the first predict late, later predicts at once.
SLOW_FIRST_PREDICT = """
import json, sys, time
for n, line in enumerate(sys.stdin):
    if n == 0:
        print(json.dumps({"n_features": 2, "n_classes": 2}), flush=True)
        continue
    if n == 1:
        time.sleep(6)
    probs = [1.0, 0.0] if n == 1 else [0.0, 1.0]
    print(json.dumps({"labels": [probs.index(1.0)], "probabilities": [probs]}), flush=True)
"""


class ScriptedTransport(Transport):
    """Transport answering from a list of canned replies."""

    target = "scripted"

    def __init__(self, *replies):
        self.replies = list(replies)
        self.sent = []

    def exchange(self, message):
        self.sent.append(message)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


META = {"n_features": 2, "n_classes": 2}


class TestServerHandler:
    """Test cases for handle_request and serve_stdio."""

    def test_meta(self):
        reply = handle_request({"op": "meta"}, ConstantModel(4, 3, 1))
        assert reply == {"n_features": 4, "n_classes": 3}

    def test_predict(self):
        reply = handle_request({"op": "predict", "instances": [[0.1] * 4] * 2}, ConstantModel(4, 3, 2))
        assert reply["labels"] == [2, 2]
        assert reply["probabilities"] == [[0.0, 0.0, 1.0]] * 2

    def test_empty_predict(self):
        reply = handle_request({"op": "predict", "instances": []}, ConstantModel(4, 3, 0))
        assert reply == {"labels": [], "probabilities": []}

    def test_request_log(self, tmp_path):
        log = RequestLog(tmp_path / "requests.jsonl")
        model = ConstantModel(2, 2, 0)
        handle_request({"op": "meta"}, model, log)
        handle_request({"op": "predict", "instances": [[0.0, 0.0]] * 3}, model, log)
        assert log.served == 2
        assert read_request_log(tmp_path / "requests.jsonl") == 3

    def test_serve_stdio_answers_every_line(self):
        stdin = io.StringIO(
            '{"op": "meta"}\n'
            "not json\n"
            '{"op": "predict"}\n'
            '{"op": "predict", "instances": [[0.5, 0.5, 0.5]]}\n'
            '{"op": "predict", "instances": [[0.5, 0.5]]}\n'
        )
        stdout = io.StringIO()
        assert serve_stdio(ConstantModel(2, 2, 1), stdin, stdout) == 5
        replies = [json.loads(line) for line in stdout.getvalue().splitlines()]
        assert replies[0] == META
        assert "error" in replies[1]
        assert "error" in replies[2]
        assert replies[3]["error_code"] == "VALIDATION_ERROR"
        assert replies[4]["labels"] == [1]

    def test_constant_class_range(self):
        with pytest.raises(ValueError):
            ConstantModel(2, 2, 5)


class TestRemotePredictor:
    """Test cases for the client side of the protocol."""

    def test_handshake(self):
        predictor = RemotePredictor(ScriptedTransport(META), RemoteModelConfig(target="x"))
        assert (predictor.n_features, predictor.n_classes) == (2, 2)
        assert predictor.describe()["target"] == "scripted"

    @pytest.mark.parametrize(
        "reply, field",
        [({"n_features": 2}, "n_classes"), ({"n_features": 0, "n_classes": 2}, "n_features")],
    )
    def test_malformed_handshake(self, reply, field):
        with pytest.raises(ProtocolError) as exc:
            RemotePredictor(ScriptedTransport(reply), RemoteModelConfig(target="x"))
        assert exc.value.details["field"] == field

    def test_batches_are_split(self):
        replies = [META] + [
            {"labels": [0] * n, "probabilities": [[1.0, 0.0]] * n} for n in (2, 2, 1)
        ]
        transport = ScriptedTransport(*replies)
        predictor = RemotePredictor(transport, RemoteModelConfig(target="x", batch_limit=2))
        probs = predictor.predict_proba(np.zeros((5, 2)))
        assert probs.shape == (5, 2)
        assert [len(m["instances"]) for m in transport.sent[1:]] == [2, 2, 1]
        assert predictor.query_count == 5

    def test_remote_predict_returns_labels(self):
        reply = {"labels": [1], "probabilities": [[0.2, 0.8]]}
        predictor = RemotePredictor(ScriptedTransport(META, reply), RemoteModelConfig(target="x"))
        labels, probs = remote_predict(predictor, [[0.1, 0.2]])
        assert labels.tolist() == [1]
        assert probs.tolist() == [[0.2, 0.8]]
        assert predictor.query_count == 1

    def test_non_distribution(self):
        reply = {"labels": [1], "probabilities": [[0.5, 0.8]]}
        predictor = RemotePredictor(ScriptedTransport(META, reply), RemoteModelConfig(target="x"))
        with pytest.raises(ProtocolError, match="not a distribution"):
            predictor.predict_proba([[0.1, 0.2]])

    def test_length_mismatch(self):
        reply = {"labels": [1], "probabilities": [[0.2, 0.8]]}
        predictor = RemotePredictor(ScriptedTransport(META, reply), RemoteModelConfig(target="x"))
        with pytest.raises(ProtocolError) as exc:
            predictor.predict_proba([[0.1, 0.2], [0.3, 0.4]])
        assert exc.value.details["field"] == "length"

    def test_timeout_during_predict(self):
        transport = ScriptedTransport(META, RemoteConnectionError("no answer", target="x"))
        predictor = RemotePredictor(transport, RemoteModelConfig(target="x"))
        with pytest.raises(ProtocolError) as exc:
            predictor.predict_proba([[0.1, 0.2]])
        assert exc.value.details["field"] == "timeout"

    def test_error_reply(self, mocker):
        transport = HttpTransport("http://model.invalid/", timeout=1.0)
        response = mocker.Mock(status_code=200, text='{"error": "bad rows"}')
        mocker.patch.object(transport.session, "post", return_value=response)
        with pytest.raises(ProtocolError, match="bad rows"):
            transport.exchange({"op": "meta"})


class TestSubprocessTransport:
    """Test cases against a real model server child process."""

    def test_constant_server(self, tmp_path):
        log = tmp_path / "requests.jsonl"
        cfg = RemoteModelConfig(
            target=server_command("--constant-class", "1", "--request-log", str(log)),
            timeout=30,
        )
        with connect(cfg) as predictor:
            assert (predictor.n_features, predictor.n_classes) == (4, 3)
            classes = predictor.predict_class(np.full((7, 4), 0.3))
            assert classes.tolist() == [1] * 7
            queries = predictor.query_count
        assert read_request_log(log) == queries == 7

    def test_served_model_matches_local(self, iris_logistic, iris_test, tmp_path):
        path = save_model(iris_logistic, tmp_path / "model.json")
        cfg = RemoteModelConfig(target=server_command("--model", str(path)), timeout=30)
        with connect(cfg) as predictor:
            remote = predictor.predict_proba(iris_test.matrix)
        assert np.allclose(remote, iris_logistic.predict_proba(iris_test.matrix), atol=1e-12)

    def test_missing_command(self):
        cfg = RemoteModelConfig(target=["/nonexistent/model-server"], timeout=1)
        with pytest.raises(RemoteConnectionError):
            connect(cfg)

    def test_silent_server_times_out(self):
        cfg = RemoteModelConfig(target=[sys.executable, "-c", "import time; time.sleep(30)"], timeout=0.5)
        with pytest.raises(RemoteConnectionError):
            connect(cfg)

    def test_unreachable_http(self):
        cfg = RemoteModelConfig(transport="http", target="http://127.0.0.1:9/", timeout=1)
        with pytest.raises(RemoteConnectionError):
            connect(cfg)

    def test_late_reply_never_answers_next_request(self):
        """After a timeout the child is gone and later requests fail."""
        cfg = RemoteModelConfig(target=[sys.executable, "-c", SLOW_FIRST_PREDICT], timeout=2)
        with connect(cfg) as predictor:
            with pytest.raises(ProtocolError) as first:
                predictor.predict_proba([[0.1, 0.2]])
            assert first.value.details["field"] == "timeout"
            assert predictor.transport.process.poll() is not None

            with pytest.raises(ProtocolError, match="unusable"):
                predictor.predict_proba([[0.3, 0.4]])


class TestHttpServer:
    """Test cases for the FastAPI model server."""

    @pytest.fixture
    def client(self):
        return TestClient(create_app(ConstantModel(2, 2, 1, name="constant")))

    def test_meta_and_predict(self, client):
        assert client.post("/", json={"op": "meta"}).json() == META
        reply = client.post("/", json={"op": "predict", "instances": [[0.1, 0.9]]}).json()
        assert reply == {"labels": [1], "probabilities": [[0.0, 1.0]]}

    def test_health_counts_requests(self, client):
        client.post("/", json={"op": "meta"})
        health = client.get("/health").json()
        assert health["status"] == "healthy"
        assert health["model"]["name"] == "constant"
        assert health["requests_served"] == 1

    def test_invalid_request(self, client):
        assert client.post("/", json={"op": "train"}).status_code == 422

    def test_wrong_width(self, client):
        response = client.post("/", json={"op": "predict", "instances": [[0.1]]})
        assert response.status_code == 422
        assert response.json()["error_code"] == "VALIDATION_ERROR"

    def test_http_transport_round_trip(self, client, mocker):
        transport = HttpTransport("http://testserver/", timeout=5.0)
        mocker.patch.object(
            transport.session,
            "post",
            side_effect=lambda url, json, timeout: client.post("/", json=json),
        )
        predictor = RemotePredictor(transport, RemoteModelConfig(transport="http", target="x"))
        assert predictor.predict_class([[0.3, 0.3]]).tolist() == [1]
