"""Shared fixtures: schemas, configs, and a local mock completion server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from schemamap.evaluation import domain_schema_path
from schemamap.pipeline import BackendSpec, PipelineConfig


@pytest.fixture(scope="session")
def person_schema_path() -> str:
    return domain_schema_path("person")


@pytest.fixture(scope="session")
def combined_schema_path(tmp_path_factory) -> str:
    """Profile + Order object types merged into one target schema config."""
    person = json.loads(Path(domain_schema_path("person")).read_text(encoding="utf-8"))
    sales = json.loads(Path(domain_schema_path("sales")).read_text(encoding="utf-8"))
    merged = {"object_types": person["object_types"] + sales["object_types"]}
    path = tmp_path_factory.mktemp("schema") / "profile_order.json"
    path.write_text(json.dumps(merged), encoding="utf-8")
    return str(path)


def make_config(schema_path: str, session_dir: str, **overrides) -> PipelineConfig:
    defaults = dict(
        schema_path=schema_path,
        measure="sorensen_dice",
        backend=BackendSpec(kind="oracle"),
        session_dir=session_dir,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


@pytest.fixture
def oracle_config(person_schema_path, tmp_path) -> PipelineConfig:
    return make_config(person_schema_path, str(tmp_path / "sessions"))


class _MockHandler(BaseHTTPRequestHandler):
    """Scriptable completion endpoint: pops queued (status, body) responses."""

    responses: list = []
    requests_seen: list = []

    def do_POST(self):  # noqa: N802 (http.server API)
        length = int(self.headers.get("content-length", 0))
        body = self.rfile.read(length)
        type(self).requests_seen.append(json.loads(body) if body else {})
        if type(self).responses:
            status, payload = type(self).responses.pop(0)
        else:
            status, payload = 200, {"text": "ok"}
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep test output quiet
        pass


class MockCompletionServer:
    def __init__(self):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _MockHandler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/complete"

    def queue(self, *responses) -> None:
        _MockHandler.responses = list(responses)

    def seen(self) -> list:
        return _MockHandler.requests_seen

    def reset(self) -> None:
        _MockHandler.responses = []
        _MockHandler.requests_seen = []

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture(scope="session")
def mock_llm_server():
    server = MockCompletionServer()
    yield server
    server.stop()


@pytest.fixture(autouse=True)
def _reset_mock_server(request):
    if "mock_llm_server" in request.fixturenames:
        server = request.getfixturevalue("mock_llm_server")
        server.reset()
    yield
