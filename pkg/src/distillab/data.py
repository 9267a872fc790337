"""Corpus management: CoNLL ingestion, synthetic generation, batching.

The labeled segment holds IOB2-tagged sentences; the unlabeled transfer
segment holds plain word sequences over which teacher traces are
recorded. The synthetic generator builds a small multilingual benchmark
with disjoint per-language function words and entity lexicons shared
across languages, so cross-lingual transfer is learnable at desk scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .tokenizer import ENTITY_TYPES, IOB2_TAGS

__all__ = [
    "TaggedSentence",
    "Corpus",
    "parse_conll",
    "write_conll",
    "repair_iob2",
    "is_valid_iob2",
    "generate_synthetic",
    "subsample_labeled",
    "batch_iter",
    "Batch",
]


@dataclass(frozen=True)
class TaggedSentence:
    words: tuple[str, ...] | list[str]
    tags: tuple[str, ...] | list[str]
    language: str

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.words) != len(self.tags):
            raise DataError(
                f"{len(self.words)} words but {len(self.tags)} tags in "
                f"{self.language} sentence"
            )


@dataclass
class Corpus:
    """Labeled training data plus dev/test splits and the unlabeled transfer set."""

    labeled: list[TaggedSentence] = field(default_factory=list)
    dev: dict[str, list[TaggedSentence]] = field(default_factory=dict)
    test: dict[str, list[TaggedSentence]] = field(default_factory=dict)
    unlabeled: list[tuple[str, ...]] = field(default_factory=list)

    @property
    def languages(self) -> list[str]:
        seen = dict.fromkeys(s.language for s in self.labeled)
        for lang in list(self.dev) + list(self.test):
            seen.setdefault(lang, None)
        return list(seen)

    def labeled_by_language(self) -> dict[str, list[TaggedSentence]]:
        out: dict[str, list[TaggedSentence]] = {}
        for sent in self.labeled:
            out.setdefault(sent.language, []).append(sent)
        return out

    def dev_sentences(self) -> list[TaggedSentence]:
        return [s for lang in self.dev for s in self.dev[lang]]

    def test_sentences(self) -> list[TaggedSentence]:
        return [s for lang in self.test for s in self.test[lang]]


def repair_iob2(tags: list[str]) -> list[str]:
    """Turn stray I-X (after O, start, or a different type) into B-X."""
    repaired = []
    prev_type = None
    for tag in tags:
        if tag.startswith("I-"):
            etype = tag[2:]
            if prev_type != etype:
                tag = "B-" + etype
            prev_type = etype
        elif tag.startswith("B-"):
            prev_type = tag[2:]
        else:
            prev_type = None
        repaired.append(tag)
    return repaired


def is_valid_iob2(tags) -> bool:
    prev_type = None
    for tag in tags:
        if tag == "O":
            prev_type = None
        elif tag.startswith("B-") and tag[2:] in ENTITY_TYPES:
            prev_type = tag[2:]
        elif tag.startswith("I-") and tag[2:] in ENTITY_TYPES:
            if prev_type != tag[2:]:
                return False
        else:
            return False
    return True


def parse_conll(path, language: str) -> list[TaggedSentence]:
    """Read token<TAB>tag lines; blank lines separate sentences.

    -DOCSTART- sentences are skipped and malformed IOB2 is repaired in
    place (stray I-X becomes B-X).
    """
    sentences: list[TaggedSentence] = []
    words: list[str] = []
    tags: list[str] = []

    def flush():
        nonlocal words, tags
        if words:
            if words[0] != "-DOCSTART-":
                sentences.append(
                    TaggedSentence(words=words, tags=repair_iob2(tags), language=language)
                )
            words, tags = [], []

    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.rstrip("\n")
                if not line.strip():
                    flush()
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0]:
                    raise DataError(
                        f"{path}:{lineno}: expected token<TAB>tag, got {line!r}"
                    )
                token, tag = parts
                if tag != "O" and tag not in IOB2_TAGS and not tag.startswith(("B-", "I-")):
                    raise DataError(f"{path}:{lineno}: malformed tag {tag!r}")
                words.append(token)
                tags.append(tag)
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    flush()
    for sent in sentences:
        for tag in sent.tags:
            if tag not in IOB2_TAGS:
                raise DataError(f"{path}: unsupported tag {tag!r} after repair")
    return sentences


def write_conll(path, sentences: list[TaggedSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            for word, tag in zip(sent.words, sent.tags):
                fh.write(f"{word}\t{tag}\n")
            fh.write("\n")


# -- synthetic benchmark ---------------------------------------------------------

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_PER_SUFFIXES = ("son", "sen", "ova", "ian")
_ORG_SUFFIXES = ("corp", "works", "bank", "group")
_LOC_SUFFIXES = ("land", "burg", "ton", "via")
_NEUTRAL_SHARE = 0.10  # lexicon entities without a type-revealing suffix
_TRIGGER_PROB = 0.8  # chance a lexicon entity is preceded by its trigger
_POOL_SHARE = 0.25  # entity mentions drawn from the type-neutral shared pool
_POOL_SIZE = 60
_POOL_MAX_GAP = 2  # function words between a pool entity and its trigger
_TRIGGERS_PER_TYPE = 1


def _syllable(rng: np.random.Generator, consonants: str) -> str:
    return consonants[rng.integers(len(consonants))] + _VOWELS[rng.integers(len(_VOWELS))]


def _make_stem(rng: np.random.Generator, n_syll: int, consonants: str = _CONSONANTS) -> str:
    return "".join(_syllable(rng, consonants) for _ in range(n_syll))


def _entity_lexicon(rng: np.random.Generator, suffixes, size: int, two_word_share: float):
    """Entity surface forms; both words of a two-word form carry the
    type's suffix family (family names, corporate heads) except for a
    small neutral share."""

    def make_word() -> str:
        stem = _make_stem(rng, int(rng.integers(1, 3))).capitalize()
        if rng.random() > _NEUTRAL_SHARE:
            stem += suffixes[rng.integers(len(suffixes))]
        return stem

    forms: list[tuple[str, ...]] = []
    seen: set[tuple[str, ...]] = set()
    while len(forms) < size:
        if rng.random() < two_word_share:
            form = (make_word(), make_word())
        else:
            form = (make_word(),)
        if form not in seen:
            seen.add(form)
            forms.append(form)
    return forms


def _language_inventory(rng: np.random.Generator, lang_index: int, taken: set[str]):
    # rotate the consonant inventory so languages sound different
    shift = (3 * lang_index) % len(_CONSONANTS)
    consonants = _CONSONANTS[shift:] + _CONSONANTS[:shift]
    words = []
    while len(words) < 25:
        w = _make_stem(rng, int(rng.integers(1, 3)), consonants[:7])
        if w not in taken:
            taken.add(w)
            words.append(w)
    k = _TRIGGERS_PER_TYPE
    triggers = {etype: words[k * i : k * i + k] for i, etype in enumerate(ENTITY_TYPES)}
    plain = words[3 * k :]
    return plain, triggers


def _zipf_weights(n: int, exponent: float = 2.0) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


def _sample_sentence(rng, plain, triggers, lexicons, lexicon_weights, pool, pool_weights):
    n_entities = int(rng.choice([0, 1, 2], p=[0.15, 0.5, 0.35]))
    words: list[str] = []
    tags: list[str] = []

    def emit_plain(lo, hi):
        for _ in range(int(rng.integers(lo, hi + 1))):
            words.append(plain[rng.integers(len(plain))])
            tags.append("O")

    emit_plain(1, 3)
    for _ in range(n_entities):
        etype = ENTITY_TYPES[rng.integers(len(ENTITY_TYPES))]
        if rng.random() < _POOL_SHARE:
            # shared-pool mention: the type lives only in the trigger word,
            # which sits up to _POOL_MAX_GAP function words to the left
            words.append(triggers[etype][rng.integers(len(triggers[etype]))])
            tags.append("O")
            emit_plain(0, _POOL_MAX_GAP)
            words.append(pool[rng.choice(len(pool), p=pool_weights)])
            tags.append("B-" + etype)
        else:
            if rng.random() < _TRIGGER_PROB:
                words.append(triggers[etype][rng.integers(len(triggers[etype]))])
                tags.append("O")
            form = lexicons[etype][rng.choice(len(lexicons[etype]), p=lexicon_weights[etype])]
            for i, token in enumerate(form):
                words.append(token)
                tags.append(("B-" if i == 0 else "I-") + etype)
        emit_plain(1, 3)
    if len(words) < 4:
        need = 4 - len(words)
        emit_plain(need, need)
    return words[:12], tags[:12]


def generate_synthetic(
    num_langs: int,
    labeled_per_lang: int,
    unlabeled_total: int,
    seed: int,
    dev_per_lang: int = 40,
    test_per_lang: int = 80,
) -> Corpus:
    """Build a deterministic multilingual toy corpus.

    Entity surface forms are shared across languages while function words
    are language-specific and disjoint, so a shared model can transfer
    entity knowledge across languages.
    """
    if num_langs < 1:
        raise DataError("need at least one language")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD151]))
    lexicons = {
        "PER": _entity_lexicon(rng, _PER_SUFFIXES, 90, two_word_share=0.45),
        "ORG": _entity_lexicon(rng, _ORG_SUFFIXES, 90, two_word_share=0.35),
        "LOC": _entity_lexicon(rng, _LOC_SUFFIXES, 90, two_word_share=0.15),
    }
    # mention frequencies follow a Zipf law, as surface forms do in real corpora
    lexicon_weights = {etype: _zipf_weights(len(forms)) for etype, forms in lexicons.items()}
    taken_stems = {form[0] for forms in lexicons.values() for form in forms}
    pool: list[str] = []
    while len(pool) < _POOL_SIZE:
        stem = _make_stem(rng, int(rng.integers(1, 3))).capitalize()
        if stem not in taken_stems:
            taken_stems.add(stem)
            pool.append(stem)
    pool_weights = _zipf_weights(len(pool))
    taken: set[str] = set()
    langs = [f"lang{i}" for i in range(num_langs)]
    inventories = {lang: _language_inventory(rng, i, taken) for i, lang in enumerate(langs)}

    corpus = Corpus()
    for lang in langs:
        plain, triggers = inventories[lang]
        for split, count in (("train", labeled_per_lang), ("dev", dev_per_lang), ("test", test_per_lang)):
            bucket: list[TaggedSentence] = []
            for _ in range(count):
                words, tags = _sample_sentence(rng, plain, triggers, lexicons, lexicon_weights, pool, pool_weights)
                bucket.append(TaggedSentence(words=words, tags=tags, language=lang))
            if split == "train":
                corpus.labeled.extend(bucket)
            elif split == "dev":
                corpus.dev[lang] = bucket
            else:
                corpus.test[lang] = bucket
    for i in range(unlabeled_total):
        lang = langs[int(rng.integers(num_langs))]
        plain, triggers = inventories[lang]
        words, _ = _sample_sentence(rng, plain, triggers, lexicons, lexicon_weights, pool, pool_weights)
        corpus.unlabeled.append(tuple(words))
    return corpus


def subsample_labeled(corpus: Corpus, k_per_lang: int, seed: int) -> Corpus:
    """Keep exactly k labeled sentences per language; other segments unchanged."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5AB5]))
    by_lang = corpus.labeled_by_language()
    kept: list[TaggedSentence] = []
    for lang in sorted(by_lang):
        sents = by_lang[lang]
        if len(sents) < k_per_lang:
            raise DataError(
                f"language {lang} has only {len(sents)} labeled sentences, "
                f"cannot subsample {k_per_lang}"
            )
        idx = rng.permutation(len(sents))[:k_per_lang]
        kept.extend(sents[i] for i in sorted(idx))
    return Corpus(labeled=kept, dev=corpus.dev, test=corpus.test, unlabeled=corpus.unlabeled)


# -- batching ---------------------------------------------------------------------


@dataclass
class Batch:
    """One optimization step's data: labeled sentences and/or trace indices."""

    labeled: list[TaggedSentence] | None = None
    unlabeled_indices: np.ndarray | None = None


def batch_iter(
    corpus: Corpus,
    traces,
    batch_size: int,
    mode: str,
    seed: int,
    labeled_batch_size: int | None = None,
):
    """Yield one epoch of batches over the requested segment(s).

    labeled: shuffled labeled batches. unlabeled: shuffled trace-index
    batches. mixed: paired (labeled, unlabeled) batches per step, the
    epoch covering the larger segment once while the smaller one cycles
    (reshuffled at each wrap). The labeled segment is usually orders of
    magnitude smaller than the transfer set, so it takes its own batch
    size (defaulting to batch_size).
    """
    if mode not in ("labeled", "unlabeled", "mixed"):
        raise DataError(f"unknown batch mode {mode!r}")
    if labeled_batch_size is None:
        labeled_batch_size = batch_size
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA7C]))

    n_lab = len(corpus.labeled)
    n_unl = traces.num_records if traces is not None else len(corpus.unlabeled)
    if traces is not None and corpus.unlabeled and traces.num_records != len(corpus.unlabeled):
        raise DataError(
            f"trace file has {traces.num_records} records but corpus has "
            f"{len(corpus.unlabeled)} unlabeled sentences"
        )

    if mode in ("labeled", "mixed") and n_lab == 0:
        raise DataError("labeled segment is empty")
    if mode in ("unlabeled", "mixed") and n_unl == 0:
        raise DataError("unlabeled segment is empty")

    if mode == "labeled":
        order = rng.permutation(n_lab)
        for lo in range(0, n_lab, labeled_batch_size):
            chunk = order[lo : lo + labeled_batch_size]
            yield Batch(labeled=[corpus.labeled[i] for i in chunk])
        return

    if mode == "unlabeled":
        order = rng.permutation(n_unl)
        for lo in range(0, n_unl, batch_size):
            yield Batch(unlabeled_indices=order[lo : lo + batch_size])
        return

    # mixed: one pass over the larger segment; the smaller side cycles
    lab_iter_is_big = n_lab > n_unl
    big_n, big_bs = (n_lab, labeled_batch_size) if lab_iter_is_big else (n_unl, batch_size)
    small_n, small_bs = (n_unl, batch_size) if lab_iter_is_big else (n_lab, labeled_batch_size)
    big_order = rng.permutation(big_n)
    small_order = rng.permutation(small_n)
    small_pos = 0
    for lo in range(0, big_n, big_bs):
        big_chunk = big_order[lo : lo + big_bs]
        small_chunk = []
        for _ in range(min(small_bs, small_n)):
            if small_pos == small_n:
                small_order = rng.permutation(small_n)
                small_pos = 0
            small_chunk.append(small_order[small_pos])
            small_pos += 1
        small_chunk = np.array(small_chunk)
        if lab_iter_is_big:
            yield Batch(
                labeled=[corpus.labeled[i] for i in big_chunk],
                unlabeled_indices=small_chunk,
            )
        else:
            yield Batch(
                labeled=[corpus.labeled[i] for i in small_chunk],
                unlabeled_indices=big_chunk,
            )
