"""Server test fixtures: in-process engine, TestClient app, and a live server."""

from __future__ import annotations

import socket
import threading
import time

import pytest
import uvicorn
from fastapi.testclient import TestClient

from xl3m_server.app import build_app
from xl3m_server.engine import ServerConfig, load_engine


@pytest.fixture(scope="session")
def engine():
    return load_engine(ServerConfig(model="tiny-random", context_window=256, seed=0))


@pytest.fixture(scope="session")
def client(engine):
    return TestClient(build_app(engine, max_parallel=4))


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    def __init__(self, engine, max_parallel: int = 8):
        self.port = _free_port()
        config = uvicorn.Config(
            build_app(engine, max_parallel=max_parallel),
            host="127.0.0.1",
            port=self.port,
            log_level="warning",
        )
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + 15
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start in time")
            time.sleep(0.02)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def close(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture(scope="session")
def live_server(engine):
    server = LiveServer(engine)
    yield server
    server.close()
