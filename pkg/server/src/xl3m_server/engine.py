"""Model engine: loads a causal LM and exposes score/generate over token ids.

Two loading paths:

* any Hugging Face model id (AutoModelForCausalLM + AutoTokenizer), for real
  small models;
* the built-in ``tiny-random`` model: a seeded randomly-initialized GPT-2
  style transformer over a byte-level vocabulary (256 ids), so the server is
  fully exercisable offline. It is a real torch transformer with a proper
  softmax head; only its weights are untrained.

Model invocation is serialized behind a lock: concurrent requests are
accepted up to the configured parallelism and queue for the model, which is
invisible to clients.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


class ContextOverflow(Exception):
    """Input longer than the served context window."""


class BadRequest(Exception):
    """Malformed request payload (unknown ids, bad mode, ...)."""


@dataclass(frozen=True)
class ServerConfig:
    model: str = "tiny-random"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8399
    max_parallel: int = 4
    context_window: int | None = None  # None = model maximum
    seed: int = 0  # weight init seed for tiny-random


class _ByteTokenizer:
    """UTF-8 byte-level tokenizer: total, exact, vocabulary of 256."""

    vocab_size = 256

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: list[int]) -> str:
        return bytes(ids).decode("utf-8", errors="replace")


class ModelEngine:
    def __init__(self, name, model, tokenizer, vocab_size, context_window, device):
        self.name = name
        self.model = model
        self.tokenizer = tokenizer
        self.vocab_size = vocab_size
        self.context_window = context_window
        self.device = device
        self._lock = threading.Lock()

    # -- helpers -------------------------------------------------------------

    def _validate(self, tokens: list[int]) -> torch.Tensor:
        if not all(isinstance(t, int) and 0 <= t < self.vocab_size for t in tokens):
            raise BadRequest(f"token ids must be ints in [0, {self.vocab_size})")
        if len(tokens) > self.context_window:
            raise ContextOverflow(
                f"{len(tokens)} tokens exceed context window {self.context_window}"
            )
        if not tokens:
            raise BadRequest("token list must be non-empty")
        return torch.tensor([tokens], dtype=torch.long, device=self.device)

    def _next_logits(self, ids: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            out = self.model(input_ids=ids)
        return out.logits[0, -1].double()

    # -- protocol operations ---------------------------------------------------

    def tokenize(self, text: str) -> list[int]:
        return [int(t) for t in self.tokenizer.encode(text)]

    def detokenize(self, ids: list[int]) -> str:
        if not all(isinstance(t, int) and 0 <= t < self.vocab_size for t in ids):
            raise BadRequest(f"token ids must be ints in [0, {self.vocab_size})")
        return self.tokenizer.decode(ids)

    def score(self, tokens: list[int]) -> list[float]:
        """Full-vocabulary natural-log softmax of the final position."""
        ids = self._validate(tokens)
        with self._lock:
            logits = self._next_logits(ids)
        logprobs = F.log_softmax(logits, dim=-1)
        return logprobs.cpu().numpy().astype(np.float64).tolist()

    def generate(self, tokens: list[int], max_new_tokens: int, mode: dict) -> list[int]:
        if max_new_tokens < 1:
            raise BadRequest("max_new_tokens must be >= 1")
        kind = mode.get("type", "greedy")
        if kind not in ("greedy", "top_k", "top_p"):
            raise BadRequest(f"unknown generation mode {kind!r}")
        ids = self._validate(tokens)
        generator = None
        if kind != "greedy":
            generator = torch.Generator(device="cpu")
            generator.manual_seed(int(mode.get("seed", 0)))
        out: list[int] = []
        with self._lock:
            current = ids
            for _ in range(max_new_tokens):
                logits = self._next_logits(current)
                token = self._pick(logits, kind, mode, generator)
                out.append(token)
                nxt = torch.tensor([[token]], dtype=torch.long, device=self.device)
                current = torch.cat([current, nxt], dim=1)
                if current.shape[1] > self.context_window:
                    current = current[:, -self.context_window :]
        return out

    @staticmethod
    def _pick(logits: torch.Tensor, kind: str, mode: dict, generator) -> int:
        if kind == "greedy":
            return int(torch.argmax(logits).item())
        probs = torch.softmax(logits, dim=-1)
        if kind == "top_k":
            k = int(mode.get("k") or 1)
            if k < 1:
                raise BadRequest("top_k mode requires k >= 1")
            values, indices = torch.topk(probs, min(k, probs.numel()))
            values = values / values.sum()
            choice = torch.multinomial(values, 1, generator=generator)
            return int(indices[choice].item())
        p = float(mode.get("p") or 0)
        if not 0 < p <= 1:
            raise BadRequest("top_p mode requires 0 < p <= 1")
        sorted_probs, order = torch.sort(probs, descending=True)
        keep = int(torch.searchsorted(torch.cumsum(sorted_probs, 0), p).item()) + 1
        kept = sorted_probs[:keep] / sorted_probs[:keep].sum()
        choice = torch.multinomial(kept, 1, generator=generator)
        return int(order[choice].item())


def load_engine(cfg: ServerConfig) -> ModelEngine:
    if cfg.model == "tiny-random":
        return _build_tiny_random(cfg)
    return _load_hf(cfg)


def _build_tiny_random(cfg: ServerConfig) -> ModelEngine:
    from transformers import GPT2Config, GPT2LMHeadModel

    window = cfg.context_window or 512
    torch.manual_seed(cfg.seed)
    config = GPT2Config(
        vocab_size=256,
        n_positions=window,
        n_embd=64,
        n_layer=2,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
    )
    model = GPT2LMHeadModel(config).to(cfg.device).eval()
    return ModelEngine(
        name=f"tiny-random-{cfg.seed}",
        model=model,
        tokenizer=_ByteTokenizer(),
        vocab_size=256,
        context_window=window,
        device=cfg.device,
    )


def _load_hf(cfg: ServerConfig) -> ModelEngine:
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(cfg.model)
    model = AutoModelForCausalLM.from_pretrained(cfg.model).to(cfg.device).eval()
    model_max = getattr(model.config, "max_position_embeddings", None) or 2048
    window = min(cfg.context_window, model_max) if cfg.context_window else model_max
    return ModelEngine(
        name=cfg.model,
        model=model,
        tokenizer=tokenizer,
        vocab_size=int(model.config.vocab_size),
        context_window=int(window),
        device=cfg.device,
    )
