"""Command-line entry point.

Commands: run, needle, bench, diag, segment. Exit codes: 0 success,
1 config error, 2 backend/transport error, 3 input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import (
    GenerationConfig,
    ModelBackend,
    NgramBackend,
    oracle_backend,
)
from .diagnostics import entropy_loss_correlation
from .errors import (
    BackendError,
    ConfigInvalid,
    EmptyContent,
    SequenceTooShort,
    Xl3mError,
)
from .harness import (
    PAPER_LENGTHS,
    NeedleTaskSpec,
    StreamTruncateMethod,
    TailTruncateMethod,
    Xl3mMethod,
    generate_haystack,
    make_method,
    measure_timing,
    run_needle_grid,
)
from .pipeline import SegmentationConfig, decompose, segment_content
from .remote import remote_backend
from .scoring import SchedulerConfig, score_subcontexts
from .selection import SelectionConfig, select_topk, splice
from .tokens import as_tokens, text_to_tokens

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_INPUT = 3


class InputError(Xl3mError):
    """Bad or missing user input (file, corpus, empty sequence)."""


@dataclass
class RunConfig:
    """Flat effective configuration; JSON config files mirror these fields."""

    backend: str = "oracle"
    url: str = "http://127.0.0.1:8399"
    needle: str | None = None
    answer: str | None = None
    vocab_size: int = 256
    corpus: str | None = None
    order: int = 2
    alpha: float = 0.1
    window: int = 512
    overlap: int = 128
    task_len: int = 128
    header_len: int = 128
    context_window: int = 2048
    k: int = 3
    max_parallel: int = 4
    token_budget: int | None = None
    max_new_tokens: int = 128
    mode: str = "greedy"
    top_k: int | None = None
    top_p: float | None = None
    seed: int = 0
    sink_len: int = 128
    recent_len: int = 1792
    keep_len: int | None = None
    out: str | None = None

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigInvalid(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def dump(self, path: str) -> None:
        Path(path).write_text(
            json.dumps(dataclasses.asdict(self), indent=2) + "\n", encoding="utf-8"
        )

    def seg_cfg(self) -> SegmentationConfig:
        return SegmentationConfig(
            window=self.window,
            overlap=self.overlap,
            task_len=self.task_len,
            header_len=self.header_len,
            context_window=self.context_window,
        )

    def sel_cfg(self) -> SelectionConfig:
        return SelectionConfig(k=self.k)

    def sched_cfg(self) -> SchedulerConfig:
        return SchedulerConfig(max_parallel=self.max_parallel, token_budget=self.token_budget)

    def gen_cfg(self, max_new_tokens: int | None = None) -> GenerationConfig:
        return GenerationConfig(
            max_new_tokens=max_new_tokens or self.max_new_tokens,
            mode=self.mode,
            k=self.top_k,
            p=self.top_p,
            seed=self.seed,
        )


def build_backend(cfg: RunConfig) -> ModelBackend:
    if cfg.backend == "oracle":
        needle = text_to_tokens(cfg.needle) if cfg.needle else None
        answer = text_to_tokens(cfg.answer) if cfg.answer else None
        return oracle_backend(
            needle, answer, vocab_size=cfg.vocab_size, context_window=cfg.context_window
        )
    if cfg.backend == "ngram":
        if not cfg.corpus:
            raise ConfigInvalid("ngram backend requires a corpus (--corpus / config key)")
        corpus = read_tokens(cfg.corpus, tokenizer=text_to_tokens)
        return NgramBackend(
            corpus,
            order=cfg.order,
            smoothing_alpha=cfg.alpha,
            vocab_size=cfg.vocab_size,
            context_window=max(cfg.context_window, 4096),
        )
    if cfg.backend == "remote":
        return remote_backend(cfg.url)
    raise ConfigInvalid(f"unknown backend {cfg.backend!r}; expected oracle|ngram|remote")


def read_tokens(path: str, tokenizer) -> np.ndarray:
    """Load tokens from a .json id list or tokenize a text file ('-' = stdin)."""
    if path == "-":
        return tokenizer(sys.stdin.read())
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file not found: {path}")
    if p.suffix == ".json":
        try:
            ids = json.loads(p.read_text(encoding="utf-8"))
            return as_tokens(ids)
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise InputError(f"{path}: not a JSON token list: {exc}") from exc
    return tokenizer(p.read_text(encoding="utf-8"))


def build_method(name: str, cfg: RunConfig):
    if name == "xl3m":
        return Xl3mMethod(seg_cfg=cfg.seg_cfg(), sel_cfg=cfg.sel_cfg(), sched=cfg.sched_cfg())
    if name == "stream_truncate":
        return StreamTruncateMethod(sink_len=cfg.sink_len, recent_len=cfg.recent_len)
    if name == "tail_truncate":
        return TailTruncateMethod(keep_len=cfg.keep_len)
    return make_method(name)


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(cfg: RunConfig, args) -> int:
    backend = build_backend(cfg)
    seq = read_tokens(args.input, backend.tokenize)
    if seq.size == 0:
        raise InputError("input is empty")
    seg, sel, sched = cfg.seg_cfg(), cfg.sel_cfg(), cfg.sched_cfg()
    sel.check_feasible(seg)
    d = decompose(seq, seg)
    if d.bypass:
        key = splice(d, [])
        scores = []
    else:
        scores = score_subcontexts(backend, list(d.sub_contexts), sched)
        key = splice(d, select_topk(scores, sel))
    generated = backend.generate(key.tokens, cfg.gen_cfg())
    if args.explain:
        print(f"# input tokens: {seq.size}  bypass: {d.bypass}")
        if scores:
            print(f"# segments: {len(scores)}  selected: {list(key.selected_indices)}")
            print("segment,start,end,entropy,selected")
            for s in scores:
                seg_i = d.segments[s.segment_index]
                mark = "*" if s.segment_index in key.selected_indices else ""
                print(f"{s.segment_index},{seg_i.start},{seg_i.end},{s.entropy:.6f},{mark}")
        print(f"# key context tokens: {key.budget_used}")
    print(backend.detokenize(generated))
    return EXIT_OK


def cmd_needle(cfg: RunConfig, args) -> int:
    backend = build_backend(cfg)
    method = build_method(args.method, cfg)
    lengths = tuple(int(x) for x in args.lengths.split(","))
    # Explicit needle/answer text lets non-oracle backends run the grid.
    needle = backend.tokenize(cfg.needle) if cfg.needle else None
    answer = backend.tokenize(cfg.answer) if cfg.answer else None
    grid = run_needle_grid(
        backend,
        method,
        lengths=lengths,
        n_deciles=args.depths,
        runs_per_cell=args.runs,
        seed=cfg.seed,
        needle_tokens=needle,
        answer_tokens=answer,
    )
    _write_out(grid.to_csv(), cfg.out)
    print(grid.render_heatmap())
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    backend = build_backend(cfg)
    if args.input:
        seq = read_tokens(args.input, backend.tokenize)
    else:
        if not hasattr(backend, "needle_tokens"):
            raise InputError("--input is required for non-oracle backends")
        rng = np.random.default_rng(cfg.seed)
        question = rng.integers(0, backend.info().vocab_size, size=cfg.task_len)
        seq = generate_haystack(
            NeedleTaskSpec(
                haystack_len=args.length,
                depth_fraction=0.5,
                needle_tokens=backend.needle_tokens,
                question_tokens=as_tokens(question),
                answer_tokens=backend.answer_tokens,
                seed=cfg.seed,
                vocab_size=backend.info().vocab_size,
            )
        )
    rows = ["method,total_s,prefill_s,decode_s,decoded_tokens"]
    for name in args.methods.split(","):
        method = build_method(name.strip(), cfg)
        report = measure_timing(backend, method, seq, decode_len=args.decode_len,
                                gen_cfg=cfg.gen_cfg())
        rows.append(
            f"{report.method},{report.total_s:.6f},{report.prefill_s:.6f},"
            f"{report.decode_s:.6f},{report.decoded_tokens}"
        )
    _write_out("\n".join(rows) + "\n", cfg.out)
    if cfg.out:
        print("\n".join(rows))
    return EXIT_OK


def cmd_diag(cfg: RunConfig, args) -> int:
    if not cfg.corpus:
        raise InputError("diag requires --corpus")
    if cfg.backend in ("oracle", "remote"):
        # Correlate directly over the corpus stream with the chosen backend.
        backend = build_backend(cfg)
        eval_tokens = read_tokens(cfg.corpus, backend.tokenize)
        if eval_tokens.size < 2:
            raise InputError("corpus too short to form (entropy, loss) pairs")
    else:
        # Fit an n-gram model on the corpus, then evaluate a self-generated
        # stream, for which expected loss per position equals the entropy.
        corpus = read_tokens(cfg.corpus, text_to_tokens)
        if corpus.size <= cfg.order:
            raise InputError(
                f"corpus of {corpus.size} tokens too short for order {cfg.order}"
            )
        backend = NgramBackend(
            corpus, order=cfg.order, smoothing_alpha=cfg.alpha, vocab_size=cfg.vocab_size
        )
        eval_tokens = backend.generate(
            corpus[: cfg.order],
            GenerationConfig(args.positions, "top_p", p=1.0, seed=cfg.seed),
        )
    report = entropy_loss_correlation(
        backend, eval_tokens, stride=args.stride, n_bins=args.bins
    )
    _write_out(report.to_csv(), cfg.out)
    print(report.summary())
    return EXIT_OK


def cmd_segment(cfg: RunConfig, args) -> int:
    backend = build_backend(cfg)
    seq = read_tokens(args.input, backend.tokenize)
    if seq.size == 0:
        raise InputError("input is empty")
    segments = segment_content(seq, cfg.seg_cfg())
    print("index,start,end,overlap_with_previous")
    prev_end = None
    for s in segments:
        overlap = max(0, prev_end - s.start) if prev_end is not None else 0
        print(f"{s.index},{s.start},{s.end},{overlap}")
        prev_end = s.end
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _shared_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file (flags override it)")
    shared.add_argument("--seed", type=int, help="seed for all non-timing randomness")
    shared.add_argument("--backend", choices=["oracle", "ngram", "remote"])
    shared.add_argument("--url", help="remote backend base URL")
    shared.add_argument("--out", help="write primary output (CSV) to this path")
    shared.add_argument("--dump-config", help="write the effective config JSON here")
    for flag, typ in [
        ("--window", int), ("--overlap", int), ("--task-len", int),
        ("--header-len", int), ("--context-window", int), ("--k", int),
        ("--max-parallel", int), ("--token-budget", int), ("--max-new-tokens", int),
        ("--top-k", int), ("--top-p", float), ("--order", int), ("--alpha", float),
        ("--vocab-size", int), ("--sink-len", int), ("--recent-len", int),
        ("--keep-len", int),
    ]:
        shared.add_argument(flag, type=typ)
    shared.add_argument("--mode", choices=["greedy", "top_k", "top_p"])
    shared.add_argument("--needle", help="oracle needle text")
    shared.add_argument("--answer", help="oracle answer text")
    shared.add_argument("--corpus", help="n-gram corpus file (text or .json tokens)")
    return shared


def build_parser() -> argparse.ArgumentParser:
    shared = _shared_flags()
    parser = argparse.ArgumentParser(
        prog="xl3m",
        description="Long-context inference via entropy-scored segment selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[shared], help="run the full pipeline on one input")
    p_run.add_argument("input", help="text file, .json token list, or '-' for stdin")
    p_run.add_argument("--explain", action="store_true",
                       help="print per-segment entropies and the selected indices")
    p_run.set_defaults(func=cmd_run)

    p_needle = sub.add_parser("needle", parents=[shared], help="needle-in-a-haystack recall grid")
    p_needle.add_argument("--method", default="xl3m",
                          choices=["xl3m", "stream_truncate", "tail_truncate"])
    p_needle.add_argument("--lengths", default=",".join(str(n) for n in PAPER_LENGTHS))
    p_needle.add_argument("--depths", type=int, default=10)
    p_needle.add_argument("--runs", type=int, default=10)
    p_needle.set_defaults(func=cmd_needle)

    p_bench = sub.add_parser("bench", parents=[shared], help="prefill/decode timing")
    p_bench.add_argument("--methods", default="xl3m,stream_truncate,tail_truncate")
    p_bench.add_argument("--decode-len", type=int, default=128)
    p_bench.add_argument("--length", type=int, default=131072,
                         help="synthetic input length when --input is omitted")
    p_bench.add_argument("--input")
    p_bench.set_defaults(func=cmd_bench)

    p_diag = sub.add_parser("diag", parents=[shared], help="entropy/loss correlation diagnostic")
    p_diag.add_argument("--positions", type=int, default=12000)
    p_diag.add_argument("--stride", type=int, default=1)
    p_diag.add_argument("--bins", type=int, default=10)
    p_diag.set_defaults(func=cmd_diag)

    p_seg = sub.add_parser("segment", parents=[shared], help="show the sliding-window table")
    p_seg.add_argument("input", help="text file, .json token list, or '-' for stdin")
    p_seg.set_defaults(func=cmd_segment)

    return parser


_FLAG_TO_FIELD = {
    "seed": "seed", "backend": "backend", "url": "url", "out": "out",
    "window": "window", "overlap": "overlap", "task_len": "task_len",
    "header_len": "header_len", "context_window": "context_window", "k": "k",
    "max_parallel": "max_parallel", "token_budget": "token_budget",
    "max_new_tokens": "max_new_tokens", "mode": "mode", "top_k": "top_k",
    "top_p": "top_p", "order": "order", "alpha": "alpha",
    "vocab_size": "vocab_size", "sink_len": "sink_len", "recent_len": "recent_len",
    "keep_len": "keep_len", "needle": "needle", "answer": "answer",
    "corpus": "corpus",
}


def effective_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, field_name, value)
    if args.command == "diag" and args.backend is None and not args.config:
        cfg.backend = "ngram"
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        if args.dump_config:
            cfg.dump(args.dump_config)
        return args.func(cfg, args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SequenceTooShort, EmptyContent) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Xl3mError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
