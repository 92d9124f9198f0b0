"""Walk through the long-context pipeline one stage at a time.

We build a 16k-token synthetic input whose only useful fact (the "needle")
sits near the middle, far outside the 2048-token model window, then watch
the pipeline find it: decompose -> score -> select -> splice -> generate.
"""

import numpy as np

from xl3m import (
    GenerationConfig,
    SchedulerConfig,
    SegmentationConfig,
    SelectionConfig,
    decompose,
    oracle_backend,
    score_subcontexts,
    select_topk,
    splice,
)

# The oracle backend stands in for an LLM: its next-token distribution is
# near-deterministic (low entropy) exactly when its needle is in the input.
backend = oracle_backend()
print(f"model window: {backend.info().context_window} tokens")
print(f"needle text:  {backend.detokenize(backend.needle_tokens)!r}")

# A 16k haystack of random filler with the needle planted at depth ~55%.
rng = np.random.default_rng(7)
tokens = rng.integers(0, 256, size=16384)
needle_at = 9000
tokens[needle_at : needle_at + backend.needle_tokens.size] = backend.needle_tokens
seq = np.asarray(tokens)

# Stage 1: decompose. The last 128 tokens act as the question; the rest is
# covered by 512-token windows that overlap by 128 tokens.
cfg = SegmentationConfig(window=512, overlap=128, task_len=128,
                         header_len=128, context_window=2048)
d = decompose(seq, cfg)
print(f"\ndecomposed {seq.size} tokens into {d.num_segments} sub-contexts "
      f"of {cfg.subcontext_len} tokens each")

# Stage 2: score every sub-context by next-token entropy, 8 calls in flight.
scores = score_subcontexts(backend, list(d.sub_contexts), SchedulerConfig(max_parallel=8))
best = min(scores, key=lambda s: s.entropy)
print(f"entropy range: {best.entropy:.2e} (segment {best.segment_index}) "
      f"to {max(s.entropy for s in scores):.3f} (irrelevant segments, ln 256)")

# Stage 3+4: keep the three most confident segments, splice chronologically.
selected = select_topk(scores, SelectionConfig(k=3))
key = splice(d, selected)
seg = d.segments[best.segment_index]
print(f"selected segments {selected}; needle segment covers "
      f"[{seg.start}, {seg.end}) and the needle starts at {needle_at}")
print(f"key context: {key.budget_used} tokens "
      f"(128 header + 3 x 512 + 128 task), fits the 2048 window")

# Stage 5: generate from the key context instead of the 16k original.
out = backend.generate(
    key.tokens, GenerationConfig(max_new_tokens=int(backend.answer_tokens.size))
)
print(f"\ngenerated: {backend.detokenize(out)!r}")
