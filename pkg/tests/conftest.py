"""Shared fixtures: tiny grids, a scripted mock inference endpoint."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from odflow import Bounds, Vocabulary, build_grid
from odflow.grid import METERS_PER_DEG_LAT, meters_per_deg_lon


def exact_bounds(n_rows: int, n_cols: int, cell_size_m: float,
                 base_lat: float = 30.0, base_lon: float = 104.0) -> Bounds:
    """Bounds spanning exactly n_rows x n_cols cells of the given size."""
    lat_extent = (n_rows - 0.25) * cell_size_m / METERS_PER_DEG_LAT
    mid_lat = base_lat + lat_extent / 2.0
    lon_extent = (n_cols - 0.25) * cell_size_m / meters_per_deg_lon(mid_lat)
    return Bounds(base_lat, base_lon, base_lat + lat_extent, base_lon + lon_extent)


def small_grid(n_rows: int = 3, n_cols: int = 3, cell_size_m: float = 1000.0):
    return build_grid(exact_bounds(n_rows, n_cols, cell_size_m), cell_size_m)


@pytest.fixture
def grid3():
    return small_grid(3, 3)


@pytest.fixture
def vocab():
    return Vocabulary.default()


class MockEndpoint:
    """In-process HTTP endpoint whose /predict behaviour is a callable.

    ``responder(body_dict) -> (status:int, payload:dict|str)`` decides each
    reply; a str payload is sent as-is (for non-JSON responses).
    """

    def __init__(self, responder):
        self.responder = responder
        self.requests = []
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except ValueError:
                    body = None
                mock.requests.append({"path": self.path, "body": body})
                status, payload = mock.responder(body)
                data = (
                    payload.encode("utf-8")
                    if isinstance(payload, str)
                    else json.dumps(payload).encode("utf-8")
                )
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


@pytest.fixture
def mock_endpoint_factory():
    made = []

    def factory(responder) -> MockEndpoint:
        ep = MockEndpoint(responder)
        ep.__enter__()
        made.append(ep)
        return ep

    yield factory
    for ep in made:
        ep.__exit__()
