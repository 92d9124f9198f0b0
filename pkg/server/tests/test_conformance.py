"""Conformance checker against a live server, plus concurrency stress and
an end-to-end run with the pipeline's remote client over the real socket."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from xl3m_server.conformance import conformance_check, render_table


def test_conformance_all_pass(live_server):
    results = conformance_check(live_server.url)
    table = render_table(results)
    assert all(r.ok for r in results), f"conformance failures:\n{table}"
    assert f"{len(results)}/{len(results)} checks passed" in table


def test_concurrent_scores_do_not_interleave(live_server, engine):
    """Distinct inputs under parallel load must produce exactly the same
    distributions as direct engine calls (no cross-request corruption)."""
    import httpx

    inputs = [[i + 1, 2 * i + 1, 3 * i + 1] for i in range(16)]
    expected = [engine.score(tokens) for tokens in inputs]

    def fetch(tokens):
        with httpx.Client(base_url=live_server.url, timeout=60) as client:
            return client.post("/v1/score", json={"tokens": tokens}).json()["logprobs"]

    with ThreadPoolExecutor(max_workers=8) as pool:
        got = list(pool.map(fetch, inputs))
    for g, e in zip(got, expected):
        assert g == e


def test_pipeline_remote_client_end_to_end(live_server):
    """The long-context pipeline drives a real model through the socket."""
    xl3m = pytest.importorskip("xl3m")

    backend = xl3m.remote_backend(live_server.url, timeout_s=120)
    info = backend.info()
    assert info.vocab_size == 256 and info.context_window == 256

    rng = np.random.default_rng(0)
    seq = xl3m.as_tokens(rng.integers(0, 256, size=1200))
    seg = xl3m.SegmentationConfig(window=64, overlap=16, task_len=32,
                                  header_len=16, context_window=256)
    key, generated = xl3m.run_pipeline(
        backend,
        seq,
        seg_cfg=seg,
        sel_cfg=xl3m.SelectionConfig(k=3),
        sched=xl3m.SchedulerConfig(max_parallel=4),
        gen_cfg=xl3m.GenerationConfig(max_new_tokens=8),
    )
    assert key.budget_used == 16 + 3 * 64 + 32 == 240
    assert generated.size == 8
    backend.close()
