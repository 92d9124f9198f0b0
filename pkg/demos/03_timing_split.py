"""Prefill/decode timing split, and why parallel scoring matters.

Prefill is everything up to the first generated token. For entropy-based
selection that includes segmenting, scoring every sub-context, and splicing,
so the scoring fan-out dominates: with m segments and one model call each,
serial scoring costs m x latency while parallel scoring costs about one.
"""

import time

import numpy as np

from xl3m import (
    SchedulerConfig,
    generate_haystack,
    make_method,
    measure_timing,
    oracle_backend,
)
from xl3m.harness import NeedleTaskSpec, Xl3mMethod


class SlowScoring:
    """Wrap a backend so every score call costs an extra 10 ms."""

    def __init__(self, inner, latency_s=0.010):
        self.inner, self.latency_s = inner, latency_s

    def info(self):
        return self.inner.info()

    def tokenize(self, text):
        return self.inner.tokenize(text)

    def detokenize(self, tokens):
        return self.inner.detokenize(tokens)

    def score(self, tokens):
        time.sleep(self.latency_s)
        return self.inner.score(tokens)

    def generate(self, tokens, cfg):
        return self.inner.generate(tokens, cfg)


backend = oracle_backend()
rng = np.random.default_rng(0)
seq = generate_haystack(NeedleTaskSpec(
    haystack_len=16384,
    depth_fraction=0.5,
    needle_tokens=backend.needle_tokens,
    question_tokens=np.asarray(rng.integers(0, 256, size=128)),
    answer_tokens=backend.answer_tokens,
    seed=0,
))

print("method               total_s  prefill_s  decode_s")
for method in (Xl3mMethod(sched=SchedulerConfig(max_parallel=8)),
               make_method("stream_truncate"), make_method("tail_truncate")):
    r = measure_timing(backend, method, seq, decode_len=128)
    print(f"{r.method:<20} {r.total_s:7.4f}  {r.prefill_s:9.4f}  {r.decode_s:8.4f}")

slow = SlowScoring(backend)
print("\nwith 10 ms per score call (42 segments at 16k):")
for parallel in (1, 8, 42):
    r = measure_timing(
        slow, Xl3mMethod(sched=SchedulerConfig(max_parallel=parallel)), seq, decode_len=8
    )
    print(f"max_parallel={parallel:<3}  prefill {r.prefill_s * 1e3:7.1f} ms")
