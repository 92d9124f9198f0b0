"""Bounded-parallel scoring: ordering, concurrency caps, token budget, errors."""

from __future__ import annotations

import threading

import numpy as np
import pytest

from conftest import FlakyBackend, InstrumentedBackend
from xl3m.backends import oracle_backend
from xl3m.errors import BackendError, ConfigInvalid
from xl3m.pipeline import SegmentationConfig, decompose
from xl3m.scoring import SchedulerConfig, entropy, score_subcontexts
from xl3m.tokens import as_tokens


def make_subs(n_segments: int = 10, seed: int = 0):
    cfg = SegmentationConfig()
    length = 128 + 512 + (n_segments - 1) * 384 + 128  # exactly n_segments windows
    rng = np.random.default_rng(seed)
    seq = as_tokens(rng.integers(0, 256, size=length + 2048))
    d = decompose(seq, cfg)
    return d, list(d.sub_contexts)


def test_scores_ordered_by_segment_index(oracle):
    _, subs = make_subs(10)
    scores = score_subcontexts(oracle, subs, SchedulerConfig(max_parallel=4))
    assert [s.segment_index for s in scores] == list(range(len(subs)))


def test_single_subcontext_equals_direct_entropy(oracle):
    _, subs = make_subs(3)
    scores = score_subcontexts(oracle, subs[:1], SchedulerConfig(max_parallel=1))
    assert len(scores) == 1
    assert scores[0].entropy == entropy(oracle.score(subs[0].tokens))


def test_concurrency_never_exceeds_max_parallel(oracle):
    backend = InstrumentedBackend(oracle, score_latency_s=0.005)
    _, subs = make_subs(12)
    scores = score_subcontexts(backend, subs, SchedulerConfig(max_parallel=4))
    assert len(scores) == len(subs)
    assert backend.high_water <= 4
    assert backend.score_calls == len(subs)


def test_parallelism_actually_happens(oracle):
    backend = InstrumentedBackend(oracle, score_latency_s=0.02)
    _, subs = make_subs(8)
    score_subcontexts(backend, subs, SchedulerConfig(max_parallel=8))
    assert backend.high_water >= 2


def test_results_identical_across_parallelism(oracle):
    _, subs = make_subs(16, seed=3)
    reference = None
    for parallel in (1, 4, 16):
        scores = score_subcontexts(oracle, subs, SchedulerConfig(max_parallel=parallel))
        key = [(s.segment_index, s.entropy) for s in scores]
        if reference is None:
            reference = key
        else:
            assert key == reference


def test_token_budget_respected(oracle):
    budget_events = []
    lock = threading.Lock()

    class TokenCounter(InstrumentedBackend):
        def score(self, tokens):
            with lock:
                budget_events.append(("+", len(tokens)))
            try:
                return super().score(tokens)
            finally:
                with lock:
                    budget_events.append(("-", len(tokens)))

    backend = TokenCounter(oracle, score_latency_s=0.002)
    _, subs = make_subs(10)
    # room for exactly two 768-token sub-contexts at a time
    score_subcontexts(
        backend, subs, SchedulerConfig(max_parallel=8, token_budget=2 * 768)
    )
    in_flight = high = 0
    for sign, n in budget_events:
        in_flight += n if sign == "+" else -n
        high = max(high, in_flight)
    assert high <= 2 * 768
    assert backend.high_water <= 2  # budget implies at most two concurrent calls


def test_token_budget_too_small_rejected(oracle):
    _, subs = make_subs(4)
    with pytest.raises(ConfigInvalid):
        score_subcontexts(oracle, subs, SchedulerConfig(max_parallel=4, token_budget=500))


def test_backend_error_annotated_with_segment_index(oracle):
    d, subs = make_subs(8)
    bad = subs[5].tokens
    flaky = FlakyBackend(oracle, fail_when=lambda t: np.array_equal(t, bad))
    for parallel in (1, 4):
        with pytest.raises(BackendError) as err:
            score_subcontexts(flaky, subs, SchedulerConfig(max_parallel=parallel))
        assert err.value.segment_index == 5
        assert isinstance(err.value.__cause__, RuntimeError)


def test_lowest_failing_index_wins(oracle):
    _, subs = make_subs(8)
    targets = {subs[2].tokens.tobytes(), subs[6].tokens.tobytes()}
    flaky = FlakyBackend(oracle, fail_when=lambda t: np.asarray(t).tobytes() in targets)
    with pytest.raises(BackendError) as err:
        score_subcontexts(flaky, subs, SchedulerConfig(max_parallel=8))
    assert err.value.segment_index == 2


def test_empty_input_gives_empty_output(oracle):
    assert score_subcontexts(oracle, [], SchedulerConfig()) == []


def test_scheduler_config_invariants():
    with pytest.raises(ConfigInvalid):
        SchedulerConfig(max_parallel=0)
    with pytest.raises(ConfigInvalid):
        SchedulerConfig(max_parallel=1, token_budget=0)
