"""Synthetic evaluation harnesses: needle-in-a-haystack grid and timing split.

The needle task plants a known fact at a controlled depth inside seeded
random filler and asks whether generation retrieves the answer. A grid of
(context length x depth decile) cells, each averaged over independent seeded
runs, maps where a method can still reach the needle. Truncation baselines
(sink+recent, plain tail) are included for comparison; their kept ranges are
computable a priori, so expected recalls are exact.

Timing is split at the first generated token: prefill covers everything
through that token (for the entropy-selection method this includes
segmentation, scoring, and splicing), decode covers the rest.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field

import numpy as np

from .backends import GenerationConfig, ModelBackend, OracleBackend
from .errors import ConfigInvalid, NeedleTooLong
from .pipeline import SegmentationConfig, decompose, segment_content
from .scoring import SchedulerConfig, score_subcontexts
from .selection import SelectionConfig, select_topk, splice
from .tokens import TokenSeq, as_tokens, concat, contains_subsequence, freeze

PAPER_LENGTHS = (16384, 32768, 65536, 131072)  # 16k -> 128k
HEATMAP_GLYPHS = " .:-=+*#%@"


# ---------------------------------------------------------------------------
# Methods under evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Xl3mMethod:
    """Entropy-scored segment selection; prepare() returns the key context."""

    seg_cfg: SegmentationConfig = field(default_factory=SegmentationConfig)
    sel_cfg: SelectionConfig = field(default_factory=SelectionConfig)
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    name: str = "xl3m"

    def prepare(self, backend: ModelBackend, seq: TokenSeq) -> TokenSeq:
        self.sel_cfg.check_feasible(self.seg_cfg)
        d = decompose(seq, self.seg_cfg)
        if d.bypass:
            return d.original
        scores = score_subcontexts(backend, list(d.sub_contexts), self.sched)
        selected = select_topk(scores, self.sel_cfg)
        return splice(d, selected).tokens


@dataclass(frozen=True)
class StreamTruncateMethod:
    """Sink + recent-token truncation (StreamLLM-style token availability)."""

    sink_len: int = 128
    recent_len: int = 1792
    name: str = "stream_truncate"

    def prepare(self, backend: ModelBackend, seq: TokenSeq) -> TokenSeq:
        limit = backend.info().context_window
        if self.sink_len + self.recent_len > limit:
            raise ConfigInvalid(
                f"sink {self.sink_len} + recent {self.recent_len} exceeds "
                f"context window {limit}"
            )
        return stream_truncate(seq, self.sink_len, self.recent_len)


@dataclass(frozen=True)
class TailTruncateMethod:
    """Keep only the last keep_len tokens (None = fill the model window)."""

    keep_len: int | None = None
    name: str = "tail_truncate"

    def prepare(self, backend: ModelBackend, seq: TokenSeq) -> TokenSeq:
        keep = self.keep_len if self.keep_len is not None else backend.info().context_window
        if keep < 1:
            raise ConfigInvalid(f"keep_len must be positive, got {keep}")
        return stream_truncate(seq, 0, keep)


METHOD_NAMES = ("xl3m", "stream_truncate", "tail_truncate")


def make_method(name: str, **kwargs):
    if name == "xl3m":
        return Xl3mMethod(**kwargs)
    if name == "stream_truncate":
        return StreamTruncateMethod(**kwargs)
    if name == "tail_truncate":
        return TailTruncateMethod(**kwargs)
    raise ConfigInvalid(f"unknown method {name!r}; expected one of {METHOD_NAMES}")


def stream_truncate(seq: TokenSeq, sink_len: int, recent_len: int) -> TokenSeq:
    """seq[0, sink) ++ seq[len-recent, len); identity when already short.

    sink_len = 0 degenerates to plain tail truncation.
    """
    if sink_len < 0 or recent_len < 0:
        raise ConfigInvalid(
            f"sink_len and recent_len must be >= 0, got {sink_len}/{recent_len}"
        )
    arr = np.asarray(seq)
    if arr.size <= sink_len + recent_len:
        return seq
    return concat(arr[:sink_len], arr[arr.size - recent_len :])


# ---------------------------------------------------------------------------
# Needle-in-a-haystack
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NeedleTaskSpec:
    """One needle placement: filler length, depth, tokens, and filler seed."""

    haystack_len: int
    depth_fraction: float
    needle_tokens: TokenSeq
    question_tokens: TokenSeq
    answer_tokens: TokenSeq
    seed: int
    vocab_size: int = 256

    def __post_init__(self):
        if not 0.0 <= self.depth_fraction <= 1.0:
            raise ConfigInvalid(
                f"depth_fraction must be in [0, 1], got {self.depth_fraction}"
            )

    @property
    def needle_offset(self) -> int:
        """Start offset of the needle inside the haystack."""
        n = int(np.asarray(self.needle_tokens).size)
        return int(round(self.depth_fraction * (self.haystack_len - n)))


def generate_haystack(spec: NeedleTaskSpec) -> TokenSeq:
    """Seeded filler of ``haystack_len`` with the needle planted at depth,
    followed by the question tokens as the trailing task.

    The filler is re-drawn if it accidentally contains the needle, so the
    planted occurrence is the only one.
    """
    needle = np.asarray(spec.needle_tokens)
    if needle.size > spec.haystack_len:
        raise NeedleTooLong(
            f"needle of {needle.size} tokens cannot fit haystack of "
            f"{spec.haystack_len}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, spec.haystack_len]))
    for _ in range(16):
        filler = rng.integers(0, spec.vocab_size, size=spec.haystack_len, dtype=np.int64)
        if not contains_subsequence(filler, needle):
            break
    else:
        raise ConfigInvalid("could not draw needle-free filler; needle too generic")
    filler[spec.needle_offset : spec.needle_offset + needle.size] = needle
    return concat(filler, spec.question_tokens)


@dataclass(frozen=True)
class NeedleRun:
    """Provenance of one grid run, enough to recompute its expected recall.

    ``straddled`` records whether the needle failed to sit fully inside any
    single window of the selection method's segmentation (always False for
    truncation methods); it marks runs where a recall miss would be a
    boundary artifact rather than a selection error.
    """

    length: int
    decile: int
    run_index: int
    seed: int
    depth_fraction: float
    needle_start: int
    needle_end: int
    total_len: int
    recall: float
    straddled: bool = False


@dataclass(frozen=True)
class GridResult:
    lengths: tuple[int, ...]
    n_deciles: int
    runs_per_cell: int
    recall: np.ndarray  # shape (len(lengths), n_deciles)
    runs: tuple[NeedleRun, ...]

    def cell(self, length: int, decile: int) -> float:
        return float(self.recall[self.lengths.index(length), decile - 1])

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("length,depth_decile,recall,runs\n")
        for i, length in enumerate(self.lengths):
            for d in range(self.n_deciles):
                out.write(f"{length},{d + 1},{self.recall[i, d]},{self.runs_per_cell}\n")
        return out.getvalue()

    def render_heatmap(self) -> str:
        """ASCII heatmap, depth deciles bottom-to-top, lengths left-to-right."""
        width = max(len(_fmt_length(n)) for n in self.lengths) + 1
        lines = ["recall heatmap (rows: depth decile, cols: length)"]
        for d in reversed(range(self.n_deciles)):
            cells = "".join(
                HEATMAP_GLYPHS[int(round(self.recall[i, d] * (len(HEATMAP_GLYPHS) - 1)))].rjust(width)
                for i in range(len(self.lengths))
            )
            lines.append(f"{d + 1:>3} |{cells}")
        lines.append("    +" + "-" * (width * len(self.lengths)))
        lines.append("     " + "".join(_fmt_length(n).rjust(width) for n in self.lengths))
        lines.append(f"     glyph scale: '{HEATMAP_GLYPHS}' = 0.0 -> 1.0")
        return "\n".join(lines)


def _fmt_length(n: int) -> str:
    return f"{n // 1024}k" if n % 1024 == 0 else str(n)


def _run_seed(seed: int, length: int, decile: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, length, decile, run])


def run_needle_grid(
    backend: ModelBackend,
    method,
    lengths: tuple[int, ...] = PAPER_LENGTHS,
    n_deciles: int = 10,
    runs_per_cell: int = 10,
    seed: int = 0,
    needle_tokens: TokenSeq | None = None,
    answer_tokens: TokenSeq | None = None,
    question_len: int | None = None,
    gen_cfg: GenerationConfig | None = None,
) -> GridResult:
    """Recall grid over (length x depth decile), runs_per_cell seeded runs each.

    Each run draws its depth uniformly within the decile range, plants the
    needle, prepares the context with ``method``, generates greedily, and
    scores recall as a contiguous-subsequence match of the answer tokens.
    Needle/answer default to the oracle backend's own; the question is a
    fresh seeded token block of exactly the task length, so the needle always
    stays inside the content sequence.
    """
    if needle_tokens is None or answer_tokens is None:
        if not isinstance(backend, OracleBackend):
            raise ConfigInvalid(
                "needle_tokens/answer_tokens required unless backend is the oracle"
            )
        needle_tokens = backend.needle_tokens
        answer_tokens = backend.answer_tokens
    needle_tokens = as_tokens(needle_tokens)
    answer_tokens = as_tokens(answer_tokens)
    if question_len is None:
        question_len = (
            method.seg_cfg.task_len if isinstance(method, Xl3mMethod) else 128
        )
    vocab = backend.info().vocab_size
    if gen_cfg is None:
        gen_cfg = GenerationConfig(max_new_tokens=int(answer_tokens.size) + 8)

    recall = np.zeros((len(lengths), n_deciles), dtype=np.float64)
    runs: list[NeedleRun] = []
    for i, length in enumerate(lengths):
        for d in range(n_deciles):
            lo, hi = d / n_deciles, (d + 1) / n_deciles
            hits = 0.0
            for r in range(runs_per_cell):
                rng = np.random.default_rng(_run_seed(seed, length, d + 1, r))
                depth = float(rng.uniform(lo, hi))
                question = freeze(
                    rng.integers(0, vocab, size=question_len, dtype=np.int64)
                )
                spec = NeedleTaskSpec(
                    haystack_len=length,
                    depth_fraction=depth,
                    needle_tokens=needle_tokens,
                    question_tokens=question,
                    answer_tokens=answer_tokens,
                    seed=int(rng.integers(0, 2**62)),
                    vocab_size=vocab,
                )
                seq = generate_haystack(spec)
                ctx = method.prepare(backend, seq)
                generated = backend.generate(ctx, gen_cfg)
                got = float(contains_subsequence(generated, answer_tokens))
                hits += got
                start = spec.needle_offset
                end = start + int(needle_tokens.size)
                straddled = False
                if isinstance(method, Xl3mMethod) and seq.size > method.seg_cfg.context_window:
                    cfg = method.seg_cfg
                    content_len = int(seq.size) - cfg.task_len
                    spans = segment_content(
                        np.zeros(content_len, dtype=np.int64), cfg
                    )
                    straddled = not any(
                        s.start <= start and end <= s.end for s in spans
                    )
                runs.append(
                    NeedleRun(
                        length=length,
                        decile=d + 1,
                        run_index=r,
                        seed=spec.seed,
                        depth_fraction=depth,
                        needle_start=start,
                        needle_end=end,
                        total_len=int(seq.size),
                        recall=got,
                        straddled=straddled,
                    )
                )
            recall[i, d] = hits / runs_per_cell
    recall.setflags(write=False)
    return GridResult(
        lengths=tuple(lengths),
        n_deciles=n_deciles,
        runs_per_cell=runs_per_cell,
        recall=recall,
        runs=tuple(runs),
    )


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimingReport:
    """Wall-clock split at the first generated token (monotonic clock)."""

    method: str
    total_s: float
    prefill_s: float
    decode_s: float
    decoded_tokens: int

    def __post_init__(self):
        gap = abs(self.total_s - (self.prefill_s + self.decode_s))
        if gap > 0.01 * self.total_s:
            raise ConfigInvalid(
                f"timing phases do not add up: {self.prefill_s} + {self.decode_s} "
                f"vs total {self.total_s}"
            )


def measure_timing(
    backend: ModelBackend,
    method,
    seq: TokenSeq,
    decode_len: int = 128,
    gen_cfg: GenerationConfig | None = None,
) -> TimingReport:
    """Prefill/decode wall-clock split for one method on one input.

    Prefill covers context preparation plus the first generated token; decode
    covers the remaining decode_len - 1 tokens, generated from the prepared
    context extended by the first token (clipped to the model window).
    """
    if decode_len < 1:
        raise ConfigInvalid(f"decode_len must be >= 1, got {decode_len}")
    base = gen_cfg or GenerationConfig()
    limit = backend.info().context_window

    t0 = time.perf_counter()
    ctx = method.prepare(backend, seq)
    first = backend.generate(
        ctx, GenerationConfig(1, base.mode, base.k, base.p, base.seed)
    )
    t1 = time.perf_counter()
    decoded = int(np.asarray(first).size)
    if decode_len > 1:
        extended = concat(ctx, first)
        if extended.size > limit:
            extended = freeze(extended[extended.size - limit :])
        rest = backend.generate(
            extended,
            GenerationConfig(decode_len - 1, base.mode, base.k, base.p, base.seed),
        )
        decoded += int(np.asarray(rest).size)
    t2 = time.perf_counter()

    return TimingReport(
        method=method.name,
        total_s=t2 - t0,
        prefill_s=t1 - t0,
        decode_s=t2 - t1,
        decoded_tokens=decoded,
    )
