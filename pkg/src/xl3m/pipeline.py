"""Long-sequence decomposition and overlapped sliding-window segmentation.

A long token sequence is split into a trailing task ("question") suffix plus
the remaining content. The content is covered by fixed-length windows that
advance by ``window - overlap`` tokens; the final window is end-aligned so
every window keeps the same length while the union still covers the content.
Each window becomes a sub-context: header prompt tokens, the window itself,
and the shared task suffix. Sub-contexts never exceed the model context
window, so a short-context model can score each one natively.

All types are immutable after construction; `decompose` is a pure function
and safe to call from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, EmptyContent, IndexOutOfRange, SequenceTooShort
from .tokens import TokenSeq, as_tokens, concat


@dataclass(frozen=True)
class SegmentationConfig:
    """Token-count geometry for decomposition.

    window / overlap control the sliding window over the content sequence,
    task_len is the size of the trailing question suffix, header_len the
    number of initial prompt tokens prepended to every sub-context, and
    context_window the model's maximum input length.
    """

    window: int = 512
    overlap: int = 128
    task_len: int = 128
    header_len: int = 128
    context_window: int = 2048

    def __post_init__(self):
        if not 0 < self.overlap < self.window:
            raise ConfigInvalid(
                f"overlap must satisfy 0 < overlap < window, got "
                f"overlap={self.overlap} window={self.window}"
            )
        if self.task_len <= 0:
            raise ConfigInvalid(f"task_len must be positive, got {self.task_len}")
        if self.header_len < 0:
            raise ConfigInvalid(f"header_len must be >= 0, got {self.header_len}")
        if self.header_len + self.window + self.task_len > self.context_window:
            raise ConfigInvalid(
                f"sub-context length {self.header_len + self.window + self.task_len} "
                f"exceeds context_window {self.context_window}"
            )

    @property
    def stride(self) -> int:
        return self.window - self.overlap

    @property
    def subcontext_len(self) -> int:
        return self.header_len + self.window + self.task_len


@dataclass(frozen=True)
class Segment:
    """Half-open token range [start, end) into the content sequence."""

    index: int
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SubContext:
    """header ++ one content segment ++ task suffix, ready for scoring."""

    segment: Segment
    tokens: TokenSeq


@dataclass(frozen=True)
class Decomposition:
    """A long sequence split into header/content/task plus its sub-contexts.

    Ranges are half-open offsets into ``original``. When the sequence already
    fits the context window, ``bypass`` is set and there are no segments: the
    original sequence should be fed to the model unchanged.
    """

    original: TokenSeq
    config: SegmentationConfig
    header_range: tuple[int, int]
    content_range: tuple[int, int]
    task_range: tuple[int, int]
    segments: tuple[Segment, ...]
    sub_contexts: tuple[SubContext, ...]
    bypass: bool

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def header(self) -> TokenSeq:
        return self.original[self.header_range[0] : self.header_range[1]]

    @property
    def content(self) -> TokenSeq:
        return self.original[self.content_range[0] : self.content_range[1]]

    @property
    def task(self) -> TokenSeq:
        return self.original[self.task_range[0] : self.task_range[1]]


def segment_content(content: TokenSeq, cfg: SegmentationConfig) -> list[Segment]:
    """Cover [0, len(content)) with overlapping fixed-length windows.

    Windows advance by ``cfg.stride``; the last window is end-aligned (its
    overlap with the previous one grows as needed) so all windows have length
    ``cfg.window`` exactly. A content shorter than one window yields a single
    short segment.
    """
    length = int(np.asarray(content).size)
    if length < 1:
        raise EmptyContent("content sequence is empty")
    window, stride = cfg.window, cfg.stride
    if length <= window:
        return [Segment(index=0, start=0, end=length)]
    count = math.ceil((length - window) / stride) + 1
    segments = [
        Segment(index=i, start=i * stride, end=i * stride + window)
        for i in range(count - 1)
    ]
    segments.append(Segment(index=count - 1, start=length - window, end=length))
    return segments


def decompose(seq: TokenSeq, cfg: SegmentationConfig) -> Decomposition:
    """Split ``seq`` into task/content/header and assemble all sub-contexts.

    Sequences no longer than the context window bypass segmentation entirely.
    """
    seq = seq if isinstance(seq, np.ndarray) else as_tokens(seq)
    length = seq.size
    if length < cfg.task_len + 1:
        raise SequenceTooShort(
            f"need at least task_len+1 = {cfg.task_len + 1} tokens, got {length}"
        )
    header_range = (0, min(cfg.header_len, length))
    content_range = (0, length - cfg.task_len)
    task_range = (length - cfg.task_len, length)
    if length <= cfg.context_window:
        return Decomposition(
            original=seq,
            config=cfg,
            header_range=header_range,
            content_range=content_range,
            task_range=task_range,
            segments=(),
            sub_contexts=(),
            bypass=True,
        )
    content = seq[content_range[0] : content_range[1]]
    segments = tuple(segment_content(content, cfg))
    header = seq[header_range[0] : header_range[1]]
    task = seq[task_range[0] : task_range[1]]
    sub_contexts = tuple(
        SubContext(segment=s, tokens=concat(header, content[s.start : s.end], task))
        for s in segments
    )
    return Decomposition(
        original=seq,
        config=cfg,
        header_range=header_range,
        content_range=content_range,
        task_range=task_range,
        segments=segments,
        sub_contexts=sub_contexts,
        bypass=False,
    )


def assemble_subcontext(d: Decomposition, i: int) -> SubContext:
    """Sub-context for segment ``i``: header ++ segment tokens ++ task.

    The header is prepended verbatim even when segment 0 overlaps it; no
    deduplication happens anywhere in the pipeline.
    """
    if d.bypass:
        raise IndexOutOfRange("decomposition bypassed segmentation; no sub-contexts")
    if not 0 <= i < len(d.segments):
        raise IndexOutOfRange(f"segment index {i} out of range [0, {len(d.segments)})")
    return d.sub_contexts[i]
