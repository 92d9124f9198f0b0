"""Wire-protocol conformance checker, driven purely over HTTP.

Verifies that a running server honors the protocol contract: info schema,
full-vocabulary normalized log-probabilities, deterministic greedy
generation, context_overflow at window+1 tokens, and tokenize/detokenize
round-trips. No model internals are touched.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import httpx
import numpy as np

NORMALIZATION_TOL = 1e-4
SAMPLE_TEXT = "conformance check: plain ascii round trip."


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _logsumexp(logprobs: np.ndarray) -> float:
    m = logprobs.max()
    return float(m + np.log(np.exp(logprobs - m).sum()))


def conformance_check(base_url: str, timeout_s: float = 60.0) -> list[CheckResult]:
    results: list[CheckResult] = []
    client = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout_s)

    def check(name: str, fn):
        try:
            detail = fn() or ""
            results.append(CheckResult(name, True, detail))
        except Exception as exc:  # noqa: BLE001 - report, don't crash
            results.append(CheckResult(name, False, str(exc)))

    info: dict = {}

    def check_info():
        nonlocal info
        resp = client.get("/v1/info")
        assert resp.status_code == 200, f"status {resp.status_code}"
        info = resp.json()
        for key in ("name", "vocab_size", "context_window", "max_parallel_hint"):
            assert key in info, f"missing field {key!r}"
        assert info["vocab_size"] >= 2 and info["context_window"] >= 1
        return f"vocab={info['vocab_size']} window={info['context_window']}"

    check("info schema", check_info)
    if not results[0].ok:
        client.close()
        return results

    def check_roundtrip():
        tokens = client.post("/v1/tokenize", json={"text": SAMPLE_TEXT}).json()["tokens"]
        assert isinstance(tokens, list) and tokens, "empty tokenization"
        text = client.post("/v1/detokenize", json={"tokens": tokens}).json()["text"]
        assert text == SAMPLE_TEXT, f"round trip changed text: {text!r}"
        return f"{len(tokens)} tokens"

    check("tokenize/detokenize round trip", check_roundtrip)

    def score_tokens():
        return client.post("/v1/tokenize", json={"text": SAMPLE_TEXT}).json()["tokens"]

    def check_score():
        resp = client.post("/v1/score", json={"tokens": score_tokens()})
        assert resp.status_code == 200, f"status {resp.status_code}"
        logprobs = np.asarray(resp.json()["logprobs"], dtype=np.float64)
        assert logprobs.size == info["vocab_size"], (
            f"expected {info['vocab_size']} logprobs, got {logprobs.size}"
        )
        assert logprobs.max() <= NORMALIZATION_TOL, "positive log-probability"
        lse = _logsumexp(logprobs)
        assert abs(lse) <= NORMALIZATION_TOL, (
            f"mass exp({lse:.3g}) outside tolerance (probabilities instead of logprobs?)"
        )
        return f"logsumexp={lse:.2e}"

    check("score normalization (full vocabulary)", check_score)

    def check_greedy_determinism():
        body = {"tokens": score_tokens(), "max_new_tokens": 16,
                "mode": {"type": "greedy"}}
        a = client.post("/v1/generate", json=body).json()["tokens"]
        b = client.post("/v1/generate", json=body).json()["tokens"]
        assert a == b, "greedy generation not deterministic"
        assert len(a) == 16, f"expected 16 tokens, got {len(a)}"
        return ""

    check("greedy generation deterministic", check_greedy_determinism)

    def check_seeded_sampling():
        body = {"tokens": score_tokens(), "max_new_tokens": 16,
                "mode": {"type": "top_p", "p": 0.95, "seed": 7}}
        a = client.post("/v1/generate", json=body).json()["tokens"]
        b = client.post("/v1/generate", json=body).json()["tokens"]
        assert a == b, "seeded top_p generation not deterministic"
        return ""

    check("seeded sampling deterministic", check_seeded_sampling)

    def check_overflow():
        too_long = [0] * (info["context_window"] + 1)
        resp = client.post("/v1/score", json={"tokens": too_long})
        assert resp.status_code == 400, f"expected 400, got {resp.status_code}"
        payload = resp.json()
        assert payload.get("error") == "context_overflow", f"got {payload!r}"
        return ""

    check("context_overflow at window+1", check_overflow)

    client.close()
    return results


def render_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        suffix = f"  {r.detail}" if r.detail else ""
        lines.append(f"{r.name.ljust(width)}  {status}{suffix}")
    passed = sum(r.ok for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="xl3m-server-check",
        description="Run the wire-protocol conformance suite against a server.",
    )
    parser.add_argument("--url", default="http://127.0.0.1:8399")
    parser.add_argument("--timeout", type=float, default=60.0)
    args = parser.parse_args(argv)
    try:
        results = conformance_check(args.url, args.timeout)
    except httpx.HTTPError as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return 2
    print(render_table(results))
    return 0 if all(r.ok for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
