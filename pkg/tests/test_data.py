"""Corpus parsing, synthetic generation, subsampling, batch iteration."""
import numpy as np
import pytest

from distillab.data import (
    Batch,
    Corpus,
    TaggedSentence,
    batch_iter,
    generate_synthetic,
    is_valid_iob2,
    parse_conll,
    repair_iob2,
    subsample_labeled,
    write_conll,
)
from distillab.errors import DataError


def test_parse_single_sentence(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_text("John\tB-PER\n\n", encoding="utf-8")
    sents = parse_conll(path, "xx")
    assert len(sents) == 1
    assert sents[0].words == ("John",)
    assert sents[0].tags == ("B-PER",)
    assert sents[0].language == "xx"


def test_parse_repairs_stray_i(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_text("a\tI-ORG\n\n", encoding="utf-8")
    sents = parse_conll(path, "xx")
    assert sents[0].tags == ("B-ORG",)


def test_parse_counts_blocks(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_text("a\tO\nb\tO\n\nc\tB-LOC\n\nd\tO\n\n", encoding="utf-8")
    assert len(parse_conll(path, "xx")) == 3


def test_parse_skips_docstart(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_text("-DOCSTART-\tO\n\na\tO\n\n", encoding="utf-8")
    assert len(parse_conll(path, "xx")) == 1


def test_parse_missing_tag_column_reports_line(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_text("a\tO\nbroken-line\n\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2"):
        parse_conll(path, "xx")


def test_parse_rejects_non_utf8(tmp_path):
    path = tmp_path / "xx.conll"
    path.write_bytes(b"\xff\xfe broken \tO\n")
    with pytest.raises(DataError, match="UTF-8"):
        parse_conll(path, "xx")


def test_conll_round_trip(tmp_path):
    sents = [
        TaggedSentence(words=["a", "b"], tags=["B-PER", "I-PER"], language="xx"),
        TaggedSentence(words=["c"], tags=["O"], language="xx"),
    ]
    path = tmp_path / "xx.conll"
    write_conll(path, sents)
    assert parse_conll(path, "xx") == sents


def test_repair_rules():
    assert repair_iob2(["I-PER"]) == ["B-PER"]
    assert repair_iob2(["O", "I-ORG", "I-ORG"]) == ["O", "B-ORG", "I-ORG"]
    assert repair_iob2(["B-PER", "I-LOC"]) == ["B-PER", "B-LOC"]
    assert is_valid_iob2(["B-PER", "I-PER", "O"])
    assert not is_valid_iob2(["O", "I-PER"])


# -- synthetic corpus ---------------------------------------------------------


def test_synthetic_deterministic():
    a = generate_synthetic(3, 10, 20, seed=7)
    b = generate_synthetic(3, 10, 20, seed=7)
    assert a.labeled == b.labeled
    assert a.unlabeled == b.unlabeled
    assert a.dev == b.dev and a.test == b.test


def test_synthetic_zero_labeled():
    c = generate_synthetic(2, 0, 15, seed=1)
    assert c.labeled == []
    assert len(c.unlabeled) == 15


def test_synthetic_counts_and_validity():
    c = generate_synthetic(5, 100, 50, seed=3)
    assert len(c.labeled) == 500
    for sent in c.labeled:
        assert is_valid_iob2(sent.tags), sent.tags
        assert 4 <= len(sent.words) <= 12
    by_lang = c.labeled_by_language()
    assert len(by_lang) == 5
    assert all(len(v) == 100 for v in by_lang.values())


def test_synthetic_entities_shared_function_words_disjoint():
    c = generate_synthetic(3, 80, 0, seed=5)
    per_lang_plain = {}
    per_lang_entities = {}
    for sent in c.labeled:
        for word, tag in zip(sent.words, sent.tags):
            target = per_lang_entities if tag != "O" else per_lang_plain
            target.setdefault(sent.language, set()).add(word)
    langs = sorted(per_lang_plain)
    entity_union = set().union(*per_lang_entities.values())
    for i, a in enumerate(langs):
        for b in langs[i + 1 :]:
            plain_overlap = per_lang_plain[a] & per_lang_plain[b]
            assert plain_overlap <= entity_union  # function words are disjoint
    shared = per_lang_entities[langs[0]] & per_lang_entities[langs[1]]
    assert shared  # entity surface forms cross languages


def test_subsample_exact_counts_and_seed_effect():
    c = generate_synthetic(3, 50, 0, seed=2)
    small = subsample_labeled(c, 10, seed=0)
    by_lang = small.labeled_by_language()
    assert all(len(v) == 10 for v in by_lang.values())
    assert small.unlabeled == c.unlabeled
    other = subsample_labeled(c, 10, seed=1)
    assert small.labeled != other.labeled
    full = subsample_labeled(c, 50, seed=0)
    assert sorted(s.words for s in full.labeled) == sorted(s.words for s in c.labeled)


def test_subsample_insufficient_names_language():
    c = generate_synthetic(2, 5, 0, seed=2)
    with pytest.raises(DataError, match="lang0"):
        subsample_labeled(c, 6, seed=0)


# -- batching -------------------------------------------------------------------


def _toy_corpus(n_lab, n_unl):
    labeled = [
        TaggedSentence(words=[f"w{i}"], tags=["O"], language="xx") for i in range(n_lab)
    ]
    unlabeled = [(f"u{i}",) for i in range(n_unl)]
    return Corpus(labeled=labeled, unlabeled=unlabeled)


def test_labeled_batches_cover_epoch():
    corpus = _toy_corpus(10, 0)
    batches = list(batch_iter(corpus, None, batch_size=4, mode="labeled", seed=0))
    assert [len(b.labeled) for b in batches] == [4, 4, 2]
    seen = [w for b in batches for s in b.labeled for w in s.words]
    assert sorted(seen) == sorted(f"w{i}" for i in range(10))


def test_unlabeled_epoch_coverage():
    corpus = _toy_corpus(0, 9)
    batches = list(batch_iter(corpus, None, batch_size=4, mode="unlabeled", seed=1))
    idx = np.concatenate([b.unlabeled_indices for b in batches])
    assert sorted(idx.tolist()) == list(range(9))


def test_mixed_mode_pairs_and_cycling():
    corpus = _toy_corpus(3, 10)
    batches = list(batch_iter(corpus, None, batch_size=4, mode="mixed", seed=2))
    assert len(batches) == 3  # epoch over the larger (unlabeled) segment
    idx = np.concatenate([b.unlabeled_indices for b in batches])
    assert sorted(idx.tolist()) == list(range(10))
    for b in batches:
        assert b.labeled is not None and len(b.labeled) == 3


def test_mixed_requires_both_segments():
    corpus = _toy_corpus(3, 0)
    with pytest.raises(DataError, match="unlabeled"):
        list(batch_iter(corpus, None, batch_size=4, mode="mixed", seed=0))


def test_batch_iter_deterministic_under_seed():
    corpus = _toy_corpus(20, 0)
    a = [b.labeled for b in batch_iter(corpus, None, 8, "labeled", seed=5)]
    b = [b.labeled for b in batch_iter(corpus, None, 8, "labeled", seed=5)]
    assert a == b
