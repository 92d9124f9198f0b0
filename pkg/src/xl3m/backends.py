"""Model-backend contract and the two built-in deterministic backends.

Every model sits behind the same five operations (info / tokenize /
detokenize / score / generate), so the whole pipeline can be verified at
desk scale without any large model:

* the needle oracle scores near-zero entropy exactly when a designated
  needle occurs in the input, giving end-to-end selection tests an exact
  ground truth;
* the add-alpha n-gram model is a small real language model whose
  entropy/loss statistics are analyzable in closed form.

Real models attach over the wire protocol (see `xl3m.remote`).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, ContextOverflow
from .scoring import Distribution
from .tokens import (
    BYTE_VOCAB,
    TokenSeq,
    as_tokens,
    contains_subsequence,
    find_subsequence,
    freeze,
    text_to_tokens,
    tokens_to_text,
)

GenerationMode = str  # "greedy" | "top_k" | "top_p"


@dataclass(frozen=True)
class BackendInfo:
    name: str
    vocab_size: int
    context_window: int
    max_parallel_hint: int = 1

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigInvalid(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.context_window < 1:
            raise ConfigInvalid(
                f"context_window must be >= 1, got {self.context_window}"
            )


@dataclass(frozen=True)
class GenerationConfig:
    """Decoding settings: greedy, top-k, or nucleus sampling.

    Sampled modes are deterministic given ``seed`` (seed defaults to 0).
    """

    max_new_tokens: int = 128
    mode: GenerationMode = "greedy"
    k: int | None = None
    p: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ConfigInvalid(
                f"max_new_tokens must be >= 1, got {self.max_new_tokens}"
            )
        if self.mode not in ("greedy", "top_k", "top_p"):
            raise ConfigInvalid(f"unknown generation mode {self.mode!r}")
        if self.mode == "top_k" and (self.k is None or self.k < 1):
            raise ConfigInvalid("top_k mode requires k >= 1")
        if self.mode == "top_p" and (self.p is None or not 0 < self.p <= 1):
            raise ConfigInvalid("top_p mode requires 0 < p <= 1")


class ModelBackend(ABC):
    """Abstract model contract used by the scorer and harnesses.

    Implementations must tolerate concurrent ``score`` calls up to their
    ``info().max_parallel_hint``.
    """

    @abstractmethod
    def info(self) -> BackendInfo: ...

    @abstractmethod
    def tokenize(self, text: str) -> TokenSeq: ...

    @abstractmethod
    def detokenize(self, tokens: TokenSeq) -> str: ...

    @abstractmethod
    def score(self, tokens: TokenSeq) -> Distribution:
        """Next-token distribution after the final position of ``tokens``."""

    @abstractmethod
    def generate(self, tokens: TokenSeq, cfg: GenerationConfig) -> TokenSeq:
        """Return exactly ``cfg.max_new_tokens`` newly generated tokens."""

    def _check_window(self, tokens: TokenSeq) -> None:
        limit = self.info().context_window
        n = int(np.asarray(tokens).size)
        if n > limit:
            raise ContextOverflow(
                f"input of {n} tokens exceeds context window {limit}"
            )


class _ByteTokenizerMixin:
    """Byte-level tokenize/detokenize, total and exact for any UTF-8 text."""

    def tokenize(self, text: str) -> TokenSeq:
        tokens = text_to_tokens(text)
        vocab = self.info().vocab_size
        if tokens.size and tokens.max() >= vocab:
            raise ValueError(f"text byte {tokens.max()} outside vocab {vocab}")
        return tokens

    def detokenize(self, tokens: TokenSeq) -> str:
        return tokens_to_text(tokens)


def _sample_from(dist: Distribution, cfg: GenerationConfig, rng: np.random.Generator) -> int:
    """Pick one token id according to the generation mode."""
    lp = dist.logprobs
    if cfg.mode == "greedy":
        return int(np.argmax(lp))
    probs = np.exp(lp - lp.max())
    probs /= probs.sum()
    if cfg.mode == "top_k":
        k = min(cfg.k, probs.size)
        keep = np.argsort(-probs, kind="stable")[:k]
    else:  # top_p
        order = np.argsort(-probs, kind="stable")
        cum = np.cumsum(probs[order])
        cutoff = int(np.searchsorted(cum, cfg.p) + 1)
        keep = order[:cutoff]
    restricted = probs[keep]
    restricted /= restricted.sum()
    return int(keep[rng.choice(restricted.size, p=restricted)])


class OracleBackend(_ByteTokenizerMixin, ModelBackend):
    """Deterministic test double: certainty appears exactly with the needle.

    score() returns probability 1-eps on the answer's first token when
    ``needle_tokens`` occurs contiguously in the input (entropy ~ 0) and the
    uniform distribution otherwise (entropy = ln v). Greedy generation emits
    the answer iff the needle is present, else a repeated filler token. An
    input ending with a proper prefix of the answer continues the answer from
    that point, so split single-token/remainder generation stays coherent.
    """

    EPSILON = 1e-6
    FILLER_TOKEN = 0

    def __init__(
        self,
        needle_tokens,
        answer_tokens,
        vocab_size: int = BYTE_VOCAB,
        context_window: int = 2048,
        max_parallel_hint: int = 16,
    ):
        self.needle_tokens = as_tokens(needle_tokens)
        self.answer_tokens = as_tokens(answer_tokens)
        if self.needle_tokens.size == 0 or self.answer_tokens.size == 0:
            raise ConfigInvalid("needle and answer must be non-empty")
        for name, toks in (("needle", self.needle_tokens), ("answer", self.answer_tokens)):
            if toks.max() >= vocab_size:
                raise ConfigInvalid(f"{name} token {toks.max()} >= vocab {vocab_size}")
        self._info = BackendInfo(
            name="oracle",
            vocab_size=vocab_size,
            context_window=context_window,
            max_parallel_hint=max_parallel_hint,
        )
        self._uniform = Distribution(
            freeze(np.full(vocab_size, -np.log(vocab_size), dtype=np.float64))
        )
        self._certain = self._peaked_on(int(self.answer_tokens[0]))

    def _peaked_on(self, token: int) -> Distribution:
        v = self._info.vocab_size
        lp = np.full(v, np.log(self.EPSILON / (v - 1)), dtype=np.float64)
        lp[token] = np.log1p(-self.EPSILON)
        return Distribution(freeze(lp))

    def info(self) -> BackendInfo:
        return self._info

    def score(self, tokens: TokenSeq) -> Distribution:
        self._check_window(tokens)
        if contains_subsequence(tokens, self.needle_tokens):
            return self._certain
        return self._uniform

    def _answer_progress(self, tokens: np.ndarray) -> int:
        """Length of the longest answer prefix ending the input (0..len(answer))."""
        answer = self.answer_tokens
        for done in range(min(answer.size, tokens.size), 0, -1):
            if np.array_equal(tokens[-done:], answer[:done]):
                return done
        return 0

    def generate(self, tokens: TokenSeq, cfg: GenerationConfig) -> TokenSeq:
        self._check_window(tokens)
        tokens = np.asarray(tokens)
        has_needle = contains_subsequence(tokens, self.needle_tokens)
        if cfg.mode == "greedy":
            if not has_needle:
                return freeze(
                    np.full(cfg.max_new_tokens, self.FILLER_TOKEN, dtype=np.int64)
                )
            start = self._answer_progress(tokens)
            remaining = self.answer_tokens[start:]
            out = np.full(cfg.max_new_tokens, self.FILLER_TOKEN, dtype=np.int64)
            n = min(remaining.size, cfg.max_new_tokens)
            out[:n] = remaining[:n]
            return freeze(out)
        rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
        out = np.empty(cfg.max_new_tokens, dtype=np.int64)
        progress = self._answer_progress(tokens) if has_needle else 0
        for i in range(cfg.max_new_tokens):
            if not has_needle:
                dist = self._uniform
                expected = None
            elif progress < self.answer_tokens.size:
                expected = int(self.answer_tokens[progress])
                dist = self._peaked_on(expected)
            else:
                expected = self.FILLER_TOKEN
                dist = self._peaked_on(expected)
            token = _sample_from(dist, cfg, rng)
            out[i] = token
            if expected is not None and token == expected:
                progress += 1
        return freeze(out)


class NgramBackend(_ByteTokenizerMixin, ModelBackend):
    """Add-alpha-smoothed n-gram language model fit on a token corpus.

    Order 1-3. score() conditions on the last (order-1) tokens; unseen
    contexts fall back to the smoothed-uniform distribution. Generation is
    deterministic given the seed.
    """

    def __init__(
        self,
        corpus,
        order: int = 2,
        smoothing_alpha: float = 0.1,
        vocab_size: int = BYTE_VOCAB,
        context_window: int = 4096,
        max_parallel_hint: int = 16,
    ):
        if order not in (1, 2, 3):
            raise ConfigInvalid(f"order must be 1, 2, or 3, got {order}")
        if smoothing_alpha <= 0:
            raise ConfigInvalid(f"smoothing_alpha must be > 0, got {smoothing_alpha}")
        corpus = as_tokens(corpus)
        if corpus.size <= order:
            raise ConfigInvalid(
                f"corpus of {corpus.size} tokens too short for order {order}"
            )
        if corpus.max() >= vocab_size:
            raise ConfigInvalid(f"corpus token {corpus.max()} >= vocab {vocab_size}")
        self.order = order
        self.alpha = float(smoothing_alpha)
        self._info = BackendInfo(
            name=f"ngram{order}",
            vocab_size=vocab_size,
            context_window=context_window,
            max_parallel_hint=max_parallel_hint,
        )
        self._counts: dict[tuple[int, ...], np.ndarray] = {}
        ctx_len = order - 1
        for t in range(ctx_len, corpus.size):
            ctx = tuple(int(x) for x in corpus[t - ctx_len : t])
            row = self._counts.get(ctx)
            if row is None:
                row = np.zeros(vocab_size, dtype=np.float64)
                self._counts[ctx] = row
            row[int(corpus[t])] += 1.0

    def info(self) -> BackendInfo:
        return self._info

    def _conditional(self, context: np.ndarray) -> Distribution:
        v = self._info.vocab_size
        ctx_len = self.order - 1
        key = tuple(int(x) for x in context[-ctx_len:]) if ctx_len else ()
        counts = self._counts.get(key)
        if counts is None:
            counts = np.zeros(v, dtype=np.float64)
        smoothed = counts + self.alpha
        logprobs = np.log(smoothed) - np.log(smoothed.sum())
        return Distribution(freeze(logprobs))

    def score(self, tokens: TokenSeq) -> Distribution:
        self._check_window(tokens)
        return self._conditional(np.asarray(tokens))

    def generate(self, tokens: TokenSeq, cfg: GenerationConfig) -> TokenSeq:
        self._check_window(tokens)
        rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
        ctx_len = self.order - 1
        context = list(np.asarray(tokens)[-ctx_len:]) if ctx_len else []
        out = np.empty(cfg.max_new_tokens, dtype=np.int64)
        for i in range(cfg.max_new_tokens):
            dist = self._conditional(np.asarray(context, dtype=np.int64))
            token = _sample_from(dist, cfg, rng)
            out[i] = token
            if ctx_len:
                context.append(token)
                context = context[-ctx_len:]
        return freeze(out)


# Default synthetic needle task shared by the CLI, demos, and tests.
DEFAULT_NEEDLE_TEXT = "The vault code is 7A42F resolute osprey."
DEFAULT_ANSWER_TEXT = "7A42F resolute osprey"
DEFAULT_QUESTION_TEXT = "What is the vault code? Answer with the exact code phrase."


def oracle_backend(
    needle_tokens=None,
    answer_tokens=None,
    vocab_size: int = BYTE_VOCAB,
    context_window: int = 2048,
) -> OracleBackend:
    """Oracle with library-default needle/answer when none are given."""
    if needle_tokens is None:
        needle_tokens = text_to_tokens(DEFAULT_NEEDLE_TEXT)
    if answer_tokens is None:
        answer_tokens = text_to_tokens(DEFAULT_ANSWER_TEXT)
    return OracleBackend(needle_tokens, answer_tokens, vocab_size, context_window)


def ngram_backend(
    corpus,
    order: int = 2,
    smoothing_alpha: float = 0.1,
    vocab_size: int = BYTE_VOCAB,
    context_window: int = 4096,
) -> NgramBackend:
    return NgramBackend(corpus, order, smoothing_alpha, vocab_size, context_window)


__all__ = [
    "BackendInfo",
    "GenerationConfig",
    "ModelBackend",
    "OracleBackend",
    "NgramBackend",
    "oracle_backend",
    "ngram_backend",
    "DEFAULT_NEEDLE_TEXT",
    "DEFAULT_ANSWER_TEXT",
    "DEFAULT_QUESTION_TEXT",
    "find_subsequence",
]
