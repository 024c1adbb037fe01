import asyncio
import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from specagent.backends import ScriptedBackend
from specagent.demo import ten_step_fixtures_yaml, ten_step_scenario
from specagent.tools import FixtureToolBackend, ToolExecutor, load_fixtures


def run(coro):
    return asyncio.run(coro)


@pytest.fixture
def ten_step():
    """(scripted backend, tool executor, fixture backend) for the bundled scenario."""
    backend = ScriptedBackend(ten_step_scenario())
    fixtures = FixtureToolBackend(load_fixtures(ten_step_fixtures_yaml()))
    return backend, ToolExecutor(fixtures), fixtures


class StubServer:
    """Local HTTP server answering every POST/GET with a queue of canned replies."""

    def __init__(self):
        self.replies = []  # list of (status, body-dict-or-str)
        self.default = (200, {})
        self.requests = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def _reply(self):
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                stub.requests.append({"path": self.path, "body": json.loads(raw) if raw else None,
                                      "headers": dict(self.headers)})
                status, body = stub.replies.pop(0) if stub.replies else stub.default
                data = body if isinstance(body, str) else json.dumps(body)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data.encode())))
                self.end_headers()
                self.wfile.write(data.encode())

            do_POST = _reply
            do_GET = _reply

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    with StubServer() as server:
        yield server


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
