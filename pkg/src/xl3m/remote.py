"""HTTP client for the model-server wire protocol.

Endpoints (JSON bodies, log-probabilities in natural log, float64):

    GET  /v1/info                                  -> name, vocab_size, context_window, max_parallel_hint
    POST /v1/tokenize   {"text": ...}              -> {"tokens": [...]}
    POST /v1/detokenize {"tokens": [...]}          -> {"text": ...}
    POST /v1/score      {"tokens": [...]}          -> {"logprobs": [...]}  # next-token distribution
    POST /v1/generate   {"tokens", "max_new_tokens", "mode"} -> {"tokens": [...]}

Servers report overflow as HTTP 400 {"error": "context_overflow"}. Received
distributions are validated (full vocabulary, mass within tolerance) before
any entropy is computed from them, so a misbehaving server fails loudly as
ProtocolViolation instead of silently skewing selection.

Retries are bounded exponential backoff. Idempotent calls (info, tokenize,
detokenize, score) retry on any transport failure or 5xx; generate retries
only on connection-level failures raised before the request was sent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import httpx
import numpy as np

from .backends import BackendInfo, GenerationConfig, ModelBackend
from .errors import (
    ContextOverflow,
    MalformedDistribution,
    ProtocolViolation,
    TransportError,
)
from .scoring import Distribution
from .tokens import TokenSeq, as_tokens, freeze


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 2
    backoff_base_s: float = 0.1
    backoff_factor: float = 2.0
    backoff_max_s: float = 2.0

    def delay(self, attempt: int) -> float:
        return min(self.backoff_base_s * self.backoff_factor**attempt, self.backoff_max_s)


# Connection-phase failures: the request never reached the server, so even
# non-idempotent calls may retry.
_CONNECT_ERRORS = (httpx.ConnectError, httpx.ConnectTimeout)


class RemoteBackend(ModelBackend):
    """ModelBackend implementation backed by a wire-protocol server."""

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 30.0,
        retry: RetryPolicy | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry or RetryPolicy()
        self._timeout = timeout_s
        bootstrap = httpx.Client(base_url=self.base_url, timeout=timeout_s)
        try:
            payload = self._request_with(bootstrap, "GET", "/v1/info", None, idempotent=True)
            self._info = self._parse_info(payload)
        finally:
            bootstrap.close()
        self._client = httpx.Client(
            base_url=self.base_url,
            timeout=timeout_s,
            limits=httpx.Limits(
                max_connections=self._info.max_parallel_hint,
                max_keepalive_connections=self._info.max_parallel_hint,
            ),
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "RemoteBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- protocol plumbing -------------------------------------------------

    def _request_with(self, client, method, path, body, idempotent: bool) -> dict:
        attempt = 0
        while True:
            retryable = False
            try:
                resp = client.request(method, path, json=body)
            except _CONNECT_ERRORS as exc:
                failure: Exception = exc
                retryable = True
            except httpx.TransportError as exc:
                failure = exc
                retryable = idempotent
            else:
                if resp.status_code >= 500:
                    failure = TransportError(
                        f"server error {resp.status_code} for {path}"
                    )
                    retryable = idempotent
                else:
                    return self._handle_response(resp, path)
            if retryable and attempt < self.retry.max_retries:
                time.sleep(self.retry.delay(attempt))
                attempt += 1
                continue
            raise TransportError(f"{method} {path} failed: {failure}") from (
                failure if isinstance(failure, Exception) else None
            )

    def _handle_response(self, resp: httpx.Response, path: str) -> dict:
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"non-JSON response from {path}") from exc
        if resp.status_code == 400:
            error = payload.get("error") if isinstance(payload, dict) else None
            detail = payload.get("detail", "") if isinstance(payload, dict) else ""
            if error == "context_overflow":
                raise ContextOverflow(f"server rejected input: {detail}")
            raise ProtocolViolation(f"server rejected request ({error}): {detail}")
        if resp.status_code != 200:
            raise ProtocolViolation(f"unexpected status {resp.status_code} from {path}")
        if not isinstance(payload, dict):
            raise ProtocolViolation(f"expected JSON object from {path}")
        return payload

    def _request(self, method: str, path: str, body: dict | None, idempotent: bool) -> dict:
        return self._request_with(self._client, method, path, body, idempotent)

    @staticmethod
    def _parse_info(payload: dict) -> BackendInfo:
        try:
            return BackendInfo(
                name=str(payload["name"]),
                vocab_size=int(payload["vocab_size"]),
                context_window=int(payload["context_window"]),
                max_parallel_hint=int(payload.get("max_parallel_hint", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolViolation(f"malformed /v1/info payload: {payload!r}") from exc

    @staticmethod
    def _parse_tokens(payload: dict, path: str) -> TokenSeq:
        tokens = payload.get("tokens")
        if not isinstance(tokens, list) or any(
            not isinstance(t, int) or isinstance(t, bool) for t in tokens
        ):
            raise ProtocolViolation(f"malformed tokens list from {path}")
        return as_tokens(tokens)

    # -- ModelBackend contract ----------------------------------------------

    def info(self) -> BackendInfo:
        return self._info

    def tokenize(self, text: str) -> TokenSeq:
        payload = self._request("POST", "/v1/tokenize", {"text": text}, idempotent=True)
        return self._parse_tokens(payload, "/v1/tokenize")

    def detokenize(self, tokens: TokenSeq) -> str:
        payload = self._request(
            "POST",
            "/v1/detokenize",
            {"tokens": np.asarray(tokens).tolist()},
            idempotent=True,
        )
        text = payload.get("text")
        if not isinstance(text, str):
            raise ProtocolViolation("malformed text field from /v1/detokenize")
        return text

    def score(self, tokens: TokenSeq) -> Distribution:
        payload = self._request(
            "POST", "/v1/score", {"tokens": np.asarray(tokens).tolist()}, idempotent=True
        )
        logprobs = payload.get("logprobs")
        if not isinstance(logprobs, list):
            raise ProtocolViolation("missing logprobs list from /v1/score")
        arr = np.asarray(logprobs, dtype=np.float64)
        if arr.ndim != 1 or arr.size != self._info.vocab_size:
            raise ProtocolViolation(
                f"expected {self._info.vocab_size} logprobs, got shape {arr.shape}"
            )
        dist = Distribution(freeze(arr))
        try:
            dist.validate()
        except MalformedDistribution as exc:
            raise ProtocolViolation(f"server distribution invalid: {exc}") from exc
        return dist

    def generate(self, tokens: TokenSeq, cfg: GenerationConfig) -> TokenSeq:
        mode: dict = {"type": cfg.mode}
        if cfg.k is not None:
            mode["k"] = cfg.k
        if cfg.p is not None:
            mode["p"] = cfg.p
        if cfg.seed is not None:
            mode["seed"] = cfg.seed
        payload = self._request(
            "POST",
            "/v1/generate",
            {
                "tokens": np.asarray(tokens).tolist(),
                "max_new_tokens": cfg.max_new_tokens,
                "mode": mode,
            },
            idempotent=False,
        )
        return self._parse_tokens(payload, "/v1/generate")


def remote_backend(
    base_url: str, timeout_s: float = 30.0, retry: RetryPolicy | None = None
) -> RemoteBackend:
    return RemoteBackend(base_url, timeout_s, retry)
