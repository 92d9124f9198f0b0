"""Shared test backends: instrumentation wrappers and a wire-protocol stub server."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from xl3m.backends import GenerationConfig, ModelBackend, oracle_backend
from xl3m.scoring import Distribution


class InstrumentedBackend(ModelBackend):
    """Delegating wrapper that records concurrency and injects latency."""

    def __init__(self, inner: ModelBackend, score_latency_s: float = 0.0):
        self.inner = inner
        self.score_latency_s = score_latency_s
        self.score_calls = 0
        self.generate_calls = 0
        self.high_water = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def info(self):
        return self.inner.info()

    def tokenize(self, text):
        return self.inner.tokenize(text)

    def detokenize(self, tokens):
        return self.inner.detokenize(tokens)

    def score(self, tokens) -> Distribution:
        with self._lock:
            self._in_flight += 1
            self.score_calls += 1
            self.high_water = max(self.high_water, self._in_flight)
        try:
            if self.score_latency_s:
                time.sleep(self.score_latency_s)
            return self.inner.score(tokens)
        finally:
            with self._lock:
                self._in_flight -= 1

    def generate(self, tokens, cfg: GenerationConfig):
        self.generate_calls += 1
        return self.inner.generate(tokens, cfg)


class FlakyBackend(ModelBackend):
    """Raises on configured segment lengths; used for error-propagation tests."""

    def __init__(self, inner: ModelBackend, fail_when=lambda tokens: False):
        self.inner = inner
        self.fail_when = fail_when

    def info(self):
        return self.inner.info()

    def tokenize(self, text):
        return self.inner.tokenize(text)

    def detokenize(self, tokens):
        return self.inner.detokenize(tokens)

    def score(self, tokens):
        if self.fail_when(tokens):
            raise RuntimeError("injected score failure")
        return self.inner.score(tokens)

    def generate(self, tokens, cfg):
        return self.inner.generate(tokens, cfg)


@pytest.fixture
def oracle():
    return oracle_backend()


# ---------------------------------------------------------------------------
# Wire-protocol stub server
# ---------------------------------------------------------------------------


class StubState:
    """Mutable knobs for fault injection, shared with the handler."""

    def __init__(self, backend: ModelBackend):
        self.backend = backend
        self.fail_next_scores = 0  # respond 500 to this many /v1/score calls
        self.fail_next_connects = 0  # close the socket before responding
        self.break_normalization = False  # send probabilities, not logprobs
        self.requests: list[str] = []
        self.lock = threading.Lock()


def _make_handler(state: StubState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # silence
            pass

        def _send(self, code: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            return json.loads(self.rfile.read(length)) if length else {}

        def do_GET(self):
            with state.lock:
                state.requests.append(f"GET {self.path}")
            if self.path == "/v1/info":
                info = state.backend.info()
                self._send(200, {
                    "name": info.name,
                    "vocab_size": info.vocab_size,
                    "context_window": info.context_window,
                    "max_parallel_hint": info.max_parallel_hint,
                })
            else:
                self._send(400, {"error": "bad_request", "detail": f"unknown {self.path}"})

        def do_POST(self):
            with state.lock:
                state.requests.append(f"POST {self.path}")
                if self.path == "/v1/score" and state.fail_next_connects > 0:
                    state.fail_next_connects -= 1
                    self.connection.close()
                    return
                if self.path == "/v1/score" and state.fail_next_scores > 0:
                    state.fail_next_scores -= 1
                    self._send(503, {"error": "transient"})
                    return
            try:
                body = self._body()
                if self.path == "/v1/tokenize":
                    tokens = state.backend.tokenize(body["text"])
                    self._send(200, {"tokens": np.asarray(tokens).tolist()})
                elif self.path == "/v1/detokenize":
                    self._send(200, {"text": state.backend.detokenize(
                        np.asarray(body["tokens"], dtype=np.int64))})
                elif self.path == "/v1/score":
                    dist = state.backend.score(np.asarray(body["tokens"], dtype=np.int64))
                    lp = np.asarray(dist.logprobs)
                    if state.break_normalization:
                        lp = np.exp(lp)  # wrong: raw probabilities
                    self._send(200, {"logprobs": lp.tolist()})
                elif self.path == "/v1/generate":
                    mode = body.get("mode", {"type": "greedy"})
                    cfg = GenerationConfig(
                        max_new_tokens=int(body["max_new_tokens"]),
                        mode=mode.get("type", "greedy"),
                        k=mode.get("k"),
                        p=mode.get("p"),
                        seed=mode.get("seed"),
                    )
                    out = state.backend.generate(
                        np.asarray(body["tokens"], dtype=np.int64), cfg)
                    self._send(200, {"tokens": np.asarray(out).tolist()})
                else:
                    self._send(400, {"error": "bad_request", "detail": f"unknown {self.path}"})
            except Exception as exc:  # noqa: BLE001 - stub maps everything to 400
                name = type(exc).__name__
                if "ContextOverflow" in name:
                    self._send(400, {"error": "context_overflow", "detail": str(exc)})
                else:
                    self._send(400, {"error": "bad_request", "detail": str(exc)})

    return Handler


class StubServer:
    def __init__(self, backend: ModelBackend):
        self.state = StubState(backend)
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _make_handler(self.state))
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer(oracle_backend(context_window=512))
    yield server
    server.close()
