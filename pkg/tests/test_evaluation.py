"""Span extraction, micro F1 against a brute-force oracle, aggregation."""
import itertools

import numpy as np
import pytest

from distillab.evaluation import (
    EvalReport,
    Span,
    aggregate_languages,
    extract_spans,
    sentence_accuracy,
    span_f1,
)


def spans(*triples):
    return {Span(entity_type=t, start=s, end=e) for t, s, e in triples}


def test_extract_basic():
    got = extract_spans(["B-PER", "I-PER", "O", "B-LOC"])
    assert got == spans(("PER", 0, 1), ("LOC", 3, 3))


def test_extract_all_o_empty():
    assert extract_spans(["O", "O", "O"]) == set()


def test_extract_stray_i_opens_span():
    assert extract_spans(["O", "I-ORG"]) == spans(("ORG", 1, 1))


def test_extract_adjacent_and_type_switch():
    got = extract_spans(["B-PER", "B-PER", "I-LOC", "I-LOC", "B-LOC"])
    assert got == spans(("PER", 0, 0), ("PER", 1, 1), ("LOC", 2, 3), ("LOC", 4, 4))


def test_span_f1_perfect():
    g = [spans(("PER", 0, 1))]
    assert span_f1(g, g) == (1.0, 1.0, 1.0)


def test_span_f1_boundary_miss():
    g = [spans(("PER", 0, 1))]
    p = [spans(("PER", 0, 0))]
    assert span_f1(g, p) == (0.0, 0.0, 0.0)


def test_span_f1_partial():
    g = [spans(("PER", 0, 1), ("LOC", 3, 3))]
    p = [spans(("PER", 0, 1))]
    precision, recall, f1 = span_f1(g, p)
    assert precision == 1.0
    assert recall == 0.5
    assert f1 == pytest.approx(2 / 3)


def test_span_f1_empty_denominators_are_zero():
    assert span_f1([set()], [set()]) == (0.0, 0.0, 0.0)
    assert span_f1([spans(("PER", 0, 0))], [set()]) == (0.0, 0.0, 0.0)


def _random_tags(rng, length):
    tags = []
    for _ in range(length):
        r = rng.random()
        if r < 0.4:
            tags.append("O")
        elif r < 0.7:
            tags.append("B-" + str(rng.choice(["PER", "ORG", "LOC"])))
        else:
            tags.append("I-" + str(rng.choice(["PER", "ORG", "LOC"])))
    return tags


def _oracle_spans(tags):
    """Enumerate every (type, start, end) and test it is a maximal valid run."""
    found = set()
    n = len(tags)
    for etype in ("PER", "ORG", "LOC"):
        for start, end in itertools.combinations_with_replacement(range(n), 2):
            # run must look like (B-X | stray I-X) then I-X...
            opens = tags[start] == "B-" + etype or (
                tags[start] == "I-" + etype
                and (start == 0 or tags[start - 1] not in ("B-" + etype, "I-" + etype))
            )
            if not opens:
                continue
            if any(tags[i] != "I-" + etype for i in range(start + 1, end + 1)):
                continue
            if end + 1 < n and tags[end + 1] == "I-" + etype:
                continue  # not maximal
            found.add(Span(entity_type=etype, start=start, end=end))
    return found


def test_span_f1_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        length = int(rng.integers(1, 11))
        gold_tags = _random_tags(rng, length)
        pred_tags = _random_tags(rng, length)
        gold, pred = extract_spans(gold_tags), extract_spans(pred_tags)
        assert gold == _oracle_spans(gold_tags)
        assert pred == _oracle_spans(pred_tags)
        p, r, f1 = span_f1([gold], [pred])
        matches = len(gold & pred)
        op = matches / len(pred) if pred else 0.0
        orc = matches / len(gold) if gold else 0.0
        of1 = 2 * op * orc / (op + orc) if op + orc else 0.0
        assert (p, r, f1) == (op, orc, of1)


def test_f1_symmetry_swaps_p_and_r():
    g = [spans(("PER", 0, 1), ("LOC", 2, 2))]
    p = [spans(("PER", 0, 1), ("ORG", 4, 5), ("LOC", 7, 7))]
    p1, r1, f1a = span_f1(g, p)
    p2, r2, f1b = span_f1(p, g)
    assert (p1, r1) == (r2, p2)
    assert f1a == pytest.approx(f1b)


def test_adding_correct_span_never_hurts():
    rng = np.random.default_rng(1)
    for _ in range(200):
        gold_tags = _random_tags(rng, int(rng.integers(2, 10)))
        pred_tags = _random_tags(rng, len(gold_tags))
        gold, pred = extract_spans(gold_tags), extract_spans(pred_tags)
        missing = sorted(gold - pred)
        if not missing:
            continue
        _, _, before = span_f1([gold], [pred])
        _, _, after = span_f1([gold], [pred | {missing[0]}])
        assert after >= before - 1e-12


def test_aggregate_languages():
    assert aggregate_languages([0.9, 0.9]) == (pytest.approx(0.9), pytest.approx(0.0))
    assert aggregate_languages([1.0, 0.0]) == (pytest.approx(0.5), pytest.approx(0.5))
    assert aggregate_languages([0.7]) == (pytest.approx(0.7), 0.0)


def test_report_builds_tables():
    gold = {"aa": [spans(("PER", 0, 0))], "bb": [spans(("LOC", 1, 2))]}
    pred = {"aa": [spans(("PER", 0, 0))], "bb": [set()]}
    report = EvalReport.from_language_spans(gold, pred)
    assert report.per_language["aa"][2] == 1.0
    assert report.per_language["bb"][2] == 0.0
    assert report.mean_f1 == pytest.approx(0.5)
    assert "mean F1" in report.table()
    assert report.records().count("\n") == 2


def test_sentence_accuracy():
    assert sentence_accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    assert sentence_accuracy([], []) == 0.0
