"""Token-sequence utilities.

Token sequences are 1-D numpy int64 arrays, frozen read-only when they cross
a public boundary so concurrent workers can share them safely. Text helpers
implement the byte-level toy tokenizer (vocab 256) used by the built-in
backends for synthetic tasks.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

BYTE_VOCAB = 256

TokenSeq = np.ndarray  # 1-D int64, read-only by convention


def as_tokens(values: Sequence[int] | Iterable[int] | np.ndarray) -> TokenSeq:
    """Copy ``values`` into a frozen 1-D int64 array.

    Raises ValueError for negative ids or non-integral input.
    """
    arr = np.array(values, dtype=np.int64, copy=True)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size and arr.min() < 0:
        raise ValueError("token ids must be non-negative")
    arr.setflags(write=False)
    return arr


def freeze(arr: np.ndarray) -> TokenSeq:
    """Freeze a freshly built array in place (no copy)."""
    arr.setflags(write=False)
    return arr


def concat(*parts: np.ndarray) -> TokenSeq:
    if not parts:
        return as_tokens([])
    return freeze(np.concatenate([np.asarray(p, dtype=np.int64) for p in parts]))


def text_to_tokens(text: str) -> TokenSeq:
    """Byte-level tokenization: one token per UTF-8 byte."""
    return freeze(np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64))


def tokens_to_text(tokens: np.ndarray) -> str:
    arr = np.asarray(tokens)
    if arr.size and (arr.min() < 0 or arr.max() >= BYTE_VOCAB):
        raise ValueError("token ids outside byte range; not byte-level tokens")
    return arr.astype(np.uint8).tobytes().decode("utf-8", errors="replace")


def find_subsequence(haystack: np.ndarray, needle: np.ndarray) -> int:
    """Offset of the first contiguous occurrence of ``needle``, or -1."""
    hay = np.asarray(haystack)
    sub = np.asarray(needle)
    n, m = hay.size, sub.size
    if m == 0:
        return 0
    if m > n:
        return -1
    if n == 0:
        return -1
    # Byte-sized vocabularies get the fast C path.
    if hay.max(initial=0) < 256 and sub.max(initial=0) < 256 and hay.min(initial=0) >= 0:
        return hay.astype(np.uint8).tobytes().find(sub.astype(np.uint8).tobytes())
    candidates = np.flatnonzero(hay[: n - m + 1] == sub[0])
    for start in candidates:
        if np.array_equal(hay[start : start + m], sub):
            return int(start)
    return -1


def contains_subsequence(haystack: np.ndarray, needle: np.ndarray) -> bool:
    return find_subsequence(haystack, needle) >= 0
