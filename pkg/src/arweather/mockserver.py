"""Local stand-in for the CWB/EPA endpoints.

Serves the packaged fixture payloads on ``GET /cwb`` and ``GET /epa`` so
the poller, the HTTP service, and the web UI can run end to end without
real upstreams. Failures are scriptable: ``GET /cwb?fail=3`` arms the
path to answer HTTP 500 to its next three plain requests.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .weather import _weather_data_path


def load_fixture(name: str) -> dict:
    return json.loads(_weather_data_path(name).read_text())


class MockWeatherServer:
    """Threaded HTTP server over mutable fixture payloads."""

    def __init__(
        self,
        cwb_payload: dict | None = None,
        epa_payload: dict | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self._payloads = {
            "/cwb": cwb_payload if cwb_payload is not None else load_fixture("cwb_fixture.json"),
            "/epa": epa_payload if epa_payload is not None else load_fixture("epa_fixture.json"),
        }
        self._pending_failures = {"/cwb": 0, "/epa": 0}
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer((host, port), self._make_handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def _make_handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def _reply(self, status: int, body: dict):
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                parsed = urlparse(self.path)
                if parsed.path == "/health":
                    self._reply(200, {"ok": True})
                    return
                if parsed.path not in mock._payloads:
                    self._reply(404, {"error": f"no such path {parsed.path}"})
                    return
                query = parse_qs(parsed.query)
                if "fail" in query:
                    n = int(query["fail"][0])
                    with mock._lock:
                        mock._pending_failures[parsed.path] = n
                    self._reply(200, {"armed": n})
                    return
                with mock._lock:
                    if mock._pending_failures[parsed.path] > 0:
                        mock._pending_failures[parsed.path] -= 1
                        inject = True
                    else:
                        inject = False
                    payload = mock._payloads[parsed.path]
                if inject:
                    self._reply(500, {"error": "injected failure"})
                    return
                self._reply(200, payload)

        return Handler

    def start(self) -> "MockWeatherServer":
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def arm_failures(self, path: str, count: int):
        with self._lock:
            self._pending_failures[path] = count

    def set_generated_at(self, timestamp: int):
        """Advance both fixtures to a new observation time."""
        with self._lock:
            for payload in self._payloads.values():
                payload["generated_at"] = int(timestamp)

    def set_station_value(self, path: str, city: str, key: str, value):
        """Tweak one station/site field (tests drive fresh observations)."""
        with self._lock:
            payload = self._payloads[path]
            rows = payload.get("stations", payload.get("sites", []))
            for row in rows:
                if row.get("city") == city:
                    row[key] = value
                    return
        raise KeyError(f"{city} not present in {path}")

    def __enter__(self) -> "MockWeatherServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
