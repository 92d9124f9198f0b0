"""Top-k segment selection and chronological key-context splicing.

The k lowest-entropy segments are kept and spliced back together in their
original order between the header and the task suffix. Selected segment
ranges are concatenated raw: adjacent selections that overlap are NOT merged,
which is what makes the budget arithmetic exact
(header + k * window + task, e.g. 128 + 3*512 + 128 = 1792).
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends import GenerationConfig, ModelBackend
from .errors import BudgetExceeded, ConfigInvalid, IndexOutOfRange
from .pipeline import Decomposition, SegmentationConfig, decompose
from .scoring import SchedulerConfig, SegmentScore, score_subcontexts
from .tokens import TokenSeq, concat


@dataclass(frozen=True)
class SelectionConfig:
    """How many segments to keep. k=3 fills a 2k window at window=512."""

    k: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ConfigInvalid(f"k must be >= 1, got {self.k}")

    def check_feasible(self, seg: SegmentationConfig) -> None:
        budget = seg.header_len + self.k * seg.window + seg.task_len
        if budget > seg.context_window:
            raise ConfigInvalid(
                f"key context of {budget} tokens (header + {self.k} x window + task) "
                f"exceeds context_window {seg.context_window}"
            )


def max_feasible_k(seg: SegmentationConfig) -> int:
    """Largest k whose spliced key context still fits the context window."""
    return (seg.context_window - seg.header_len - seg.task_len) // seg.window


@dataclass(frozen=True)
class KeyContext:
    """Spliced header + selected segments (chronological) + task.

    ``source_ranges`` holds the content-sequence offsets each spliced segment
    came from, so every non-header/task token is traceable to exactly one
    selected segment.
    """

    tokens: TokenSeq
    selected_indices: tuple[int, ...]
    budget_used: int
    source_ranges: tuple[tuple[int, int], ...] = ()


def select_topk(scores: list[SegmentScore], cfg: SelectionConfig) -> list[int]:
    """Indices of the min(k, m) smallest entropies, ascending by segment.

    Ties resolve toward the smaller segment index. The ascending result order
    is what keeps the later splice chronological.
    """
    if not scores:
        raise ValueError("scores must be non-empty")
    by_entropy = sorted(scores, key=lambda s: (s.entropy, s.segment_index))
    return sorted(s.segment_index for s in by_entropy[: cfg.k])


def splice(d: Decomposition, selected: list[int]) -> KeyContext:
    """Build the key context from the selected segment ordinals.

    For a bypassed decomposition the key context is the original sequence
    unchanged. Otherwise the result is header ++ selected segment ranges in
    ascending index order ++ task, with no overlap deduplication.
    """
    if d.bypass:
        if selected:
            raise IndexOutOfRange("bypassed decomposition has no segments to splice")
        return KeyContext(
            tokens=d.original,
            selected_indices=(),
            budget_used=int(d.original.size),
        )
    m = len(d.segments)
    ordered = list(selected)
    if any(not 0 <= i < m for i in ordered):
        raise IndexOutOfRange(f"selected indices {ordered} outside [0, {m})")
    if any(b <= a for a, b in zip(ordered, ordered[1:])):
        raise ValueError(f"selected indices must be strictly ascending, got {ordered}")
    content = d.content
    parts = [d.header]
    ranges = []
    for i in ordered:
        seg = d.segments[i]
        parts.append(content[seg.start : seg.end])
        ranges.append((seg.start, seg.end))
    parts.append(d.task)
    tokens = concat(*parts)
    budget_used = int(tokens.size)
    if budget_used > d.config.context_window:
        raise BudgetExceeded(
            f"key context of {budget_used} tokens exceeds "
            f"context_window {d.config.context_window}"
        )
    return KeyContext(
        tokens=tokens,
        selected_indices=tuple(ordered),
        budget_used=budget_used,
        source_ranges=tuple(ranges),
    )


def run_pipeline(
    backend: ModelBackend,
    seq: TokenSeq,
    seg_cfg: SegmentationConfig | None = None,
    sel_cfg: SelectionConfig | None = None,
    sched: SchedulerConfig | None = None,
    gen_cfg: GenerationConfig | None = None,
) -> tuple[KeyContext, TokenSeq]:
    """decompose -> score -> select -> splice -> generate, end to end.

    Sequences that already fit the context window generate directly from the
    original tokens. Returns the key context together with the generated
    continuation.
    """
    seg_cfg = seg_cfg or SegmentationConfig()
    sel_cfg = sel_cfg or SelectionConfig()
    sched = sched or SchedulerConfig()
    gen_cfg = gen_cfg or GenerationConfig()
    sel_cfg.check_feasible(seg_cfg)
    model_window = backend.info().context_window
    if seg_cfg.context_window > model_window:
        raise ConfigInvalid(
            f"configured context_window {seg_cfg.context_window} exceeds "
            f"backend window {model_window}"
        )
    d = decompose(seq, seg_cfg)
    if d.bypass:
        key = splice(d, [])
    else:
        scores = score_subcontexts(backend, list(d.sub_contexts), sched)
        selected = select_topk(scores, sel_cfg)
        key = splice(d, selected)
    generated = backend.generate(key.tokens, gen_cfg)
    return key, generated
