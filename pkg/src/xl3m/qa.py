"""Generic QA-task ingestion (JSONL) and string-match metrics."""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)

METRICS = ("exact", "substring", "token_f1")


@dataclass(frozen=True)
class QARecord:
    id: str
    context: str
    question: str
    answers: tuple[str, ...]

    def __post_init__(self):
        if not self.answers:
            raise ValueError(f"record {self.id!r} has no acceptable answers")


def load_qa_jsonl(path: str | Path) -> list[QARecord]:
    """One JSON object per line: {"id", "context", "question", "answers": [str]}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    QARecord(
                        id=str(obj["id"]),
                        context=str(obj["context"]),
                        question=str(obj["question"]),
                        answers=tuple(str(a) for a in obj["answers"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed QA record: {exc}") from exc
    return records


def normalize_text(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def _token_f1(predicted: str, answer: str) -> float:
    pred = normalize_text(predicted).split()
    gold = normalize_text(answer).split()
    if not pred or not gold:
        return float(pred == gold)
    overlap = sum((Counter(pred) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def score_qa(predicted: str, answers: list[str] | tuple[str, ...], metric: str = "token_f1") -> float:
    """Best score of the prediction against any acceptable answer, in [0, 1]."""
    if not answers:
        raise ValueError("answers must be non-empty")
    if metric == "exact":
        norm = normalize_text(predicted)
        return float(any(norm == normalize_text(a) for a in answers))
    if metric == "substring":
        norm = normalize_text(predicted)
        return float(any(normalize_text(a) in norm for a in answers))
    if metric == "token_f1":
        return max(_token_f1(predicted, a) for a in answers)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
