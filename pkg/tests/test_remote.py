"""Wire-protocol client: endpoint mapping, validation, and retry behavior."""

from __future__ import annotations

import math

import httpx
import numpy as np
import pytest

from conftest import StubServer
from xl3m.backends import GenerationConfig, oracle_backend
from xl3m.errors import ContextOverflow, ProtocolViolation, TransportError
from xl3m.remote import RemoteBackend, RetryPolicy
from xl3m.scoring import entropy
from xl3m.tokens import as_tokens, contains_subsequence

FAST_RETRY = RetryPolicy(max_retries=2, backoff_base_s=0.01, backoff_max_s=0.02)


@pytest.fixture
def remote(stub_server):
    backend = RemoteBackend(stub_server.url, timeout_s=5.0, retry=FAST_RETRY)
    yield backend
    backend.close()


def test_info_mapping(stub_server, remote):
    info = remote.info()
    inner = stub_server.state.backend.info()
    assert (info.name, info.vocab_size, info.context_window) == (
        inner.name, inner.vocab_size, inner.context_window,
    )


def test_tokenize_detokenize_roundtrip(remote):
    text = "hello wire protocol"
    tokens = remote.tokenize(text)
    assert remote.detokenize(tokens) == text


def test_score_parses_distribution_byte_exactly(stub_server, remote):
    tokens = as_tokens([1, 2, 3, 4])
    got = remote.score(tokens)
    want = stub_server.state.backend.score(tokens)
    # float64 values survive the JSON round trip bit-for-bit
    np.testing.assert_array_equal(got.logprobs, want.logprobs)
    assert entropy(got) == pytest.approx(math.log(256), rel=1e-12)


def test_generate_roundtrip(stub_server, remote):
    inner = stub_server.state.backend
    seq = np.zeros(300, dtype=np.int64)
    seq[50 : 50 + inner.needle_tokens.size] = inner.needle_tokens
    out = remote.generate(as_tokens(seq), GenerationConfig(max_new_tokens=32))
    assert contains_subsequence(out, inner.answer_tokens)


def test_generate_passes_mode_through(remote):
    cfg = GenerationConfig(max_new_tokens=16, mode="top_p", p=0.9, seed=4)
    a = remote.generate(as_tokens([1, 2, 3]), cfg)
    b = remote.generate(as_tokens([1, 2, 3]), cfg)
    np.testing.assert_array_equal(a, b)


def test_context_overflow_maps_to_error(remote):
    limit = remote.info().context_window
    with pytest.raises(ContextOverflow):
        remote.score(as_tokens(np.zeros(limit + 1)))


def test_mass_violation_raises_protocol_violation(stub_server, remote):
    stub_server.state.break_normalization = True
    with pytest.raises(ProtocolViolation):
        remote.score(as_tokens([1, 2, 3]))


def test_transient_5xx_then_success(stub_server, remote):
    stub_server.state.fail_next_scores = 2
    dist = remote.score(as_tokens([9, 8, 7]))
    dist.validate()
    score_calls = [r for r in stub_server.state.requests if "score" in r]
    assert len(score_calls) == 3  # two failures + one success


def test_retries_exhausted_raises_transport(stub_server, remote):
    stub_server.state.fail_next_scores = 10
    with pytest.raises(TransportError):
        remote.score(as_tokens([9, 8, 7]))


def test_score_retries_on_dropped_connection(stub_server, remote):
    stub_server.state.fail_next_connects = 1
    dist = remote.score(as_tokens([5, 5, 5]))
    dist.validate()


def test_generate_does_not_retry_after_bytes_sent(stub_server, remote, monkeypatch):
    """A connection dropped mid-request is not a connect-phase failure, so the
    non-idempotent generate call must fail instead of retrying."""
    calls = {"n": 0}
    original = remote._client.request

    def flaky_request(method, path, **kw):
        if path == "/v1/generate":
            calls["n"] += 1
            if calls["n"] == 1:
                raise httpx.ReadError("connection dropped mid-response")
        return original(method, path, **kw)

    monkeypatch.setattr(remote._client, "request", flaky_request)
    with pytest.raises(TransportError):
        remote.generate(as_tokens([1]), GenerationConfig(max_new_tokens=4))
    assert calls["n"] == 1


def test_generate_retries_on_connect_phase_failure(stub_server, remote, monkeypatch):
    calls = {"n": 0}
    original = remote._client.request

    def flaky_request(method, path, **kw):
        if path == "/v1/generate":
            calls["n"] += 1
            if calls["n"] == 1:
                raise httpx.ConnectError("refused")
        return original(method, path, **kw)

    monkeypatch.setattr(remote._client, "request", flaky_request)
    out = remote.generate(as_tokens([1, 2]), GenerationConfig(max_new_tokens=4))
    assert out.size == 4
    assert calls["n"] == 2


def test_unreachable_server_raises_transport():
    with pytest.raises(TransportError):
        RemoteBackend("http://127.0.0.1:1", timeout_s=0.2, retry=FAST_RETRY)


def test_contract_entropy_bounds(remote):
    v = remote.info().vocab_size
    h = entropy(remote.score(as_tokens([4, 5, 6, 7])))
    assert 0 <= h <= math.log(v) + 1e-6


def test_contract_generate_length(remote):
    out = remote.generate(as_tokens([1, 2, 3]), GenerationConfig(max_new_tokens=17))
    assert out.size == 17


def test_wrong_vocab_length_rejected(stub_server, remote, monkeypatch):
    def bad_request(method, path, **kw):
        class Resp:
            status_code = 200

            def json(self):
                return {"logprobs": [0.0, -1.0]}  # wrong length

        return Resp()

    monkeypatch.setattr(remote._client, "request", bad_request)
    with pytest.raises(ProtocolViolation):
        remote.score(as_tokens([1]))
