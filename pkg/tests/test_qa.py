"""QA metrics and JSONL ingestion."""

from __future__ import annotations

import pytest

from xl3m.qa import QARecord, load_qa_jsonl, normalize_text, score_qa


def test_verbatim_answer_scores_one_everywhere():
    for metric in ("exact", "substring", "token_f1"):
        assert score_qa("Paris", ["Paris"], metric) == 1.0


def test_normalization_forgives_case_and_punctuation():
    assert score_qa("  The Answer!! ", ["the answer"], "exact") == 1.0
    assert normalize_text("A,B.C") == "abc"


def test_substring_containment():
    assert score_qa("the capital is Paris, obviously", ["paris"], "substring") == 1.0
    assert score_qa("the capital is Lyon", ["paris"], "substring") == 0.0


def test_half_overlap_f1():
    # P = R = 0.5 -> F1 = 0.5
    assert score_qa("alpha beta", ["alpha gamma"], "token_f1") == pytest.approx(0.5)


def test_disjoint_tokens_zero():
    assert score_qa("alpha beta", ["gamma delta"], "token_f1") == 0.0
    assert score_qa("alpha", ["gamma"], "exact") == 0.0


def test_f1_symmetry():
    pairs = [("a b c", "a c d"), ("x", "x y"), ("one two three", "three two")]
    for a, b in pairs:
        assert score_qa(a, [b], "token_f1") == pytest.approx(score_qa(b, [a], "token_f1"))


def test_best_answer_wins():
    assert score_qa("blue whale", ["red fox", "blue whale"], "token_f1") == 1.0


def test_duplicate_tokens_use_multiset_overlap():
    assert score_qa("a a b", ["a b b"], "token_f1") == pytest.approx(2 * (2 / 3) * (2 / 3) / (4 / 3))


def test_unknown_metric_rejected():
    with pytest.raises(ValueError):
        score_qa("x", ["x"], "rouge")
    with pytest.raises(ValueError):
        score_qa("x", [], "exact")


def test_jsonl_roundtrip(tmp_path):
    path = tmp_path / "tasks.jsonl"
    path.write_text(
        '{"id": "1", "context": "c", "question": "q", "answers": ["a", "b"]}\n'
        "\n"
        '{"id": "2", "context": "c2", "question": "q2", "answers": ["z"]}\n',
        encoding="utf-8",
    )
    records = load_qa_jsonl(path)
    assert [r.id for r in records] == ["1", "2"]
    assert records[0].answers == ("a", "b")


def test_jsonl_rejects_missing_fields(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "1", "question": "q", "answers": ["a"]}\n', encoding="utf-8")
    with pytest.raises(ValueError):
        load_qa_jsonl(path)


def test_record_requires_answers():
    with pytest.raises(ValueError):
        QARecord(id="1", context="c", question="q", answers=())
