"""Wordpiece-style subword tokenization and tag alignment.

Words are normalized (casing preserved, accents stripped), split into
subword pieces by greedy longest match against a learned vocabulary, and
laid out as ``[CLS] pieces... [SEP] [PAD]...``. The first piece of each
word carries the word's tag; continuation pieces carry the auxiliary tag
``X``. Together with the CLS/SEP/PAD markers and the 7 IOB2 tags this
gives an 11-tag scheme.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass

import numpy as np

from .errors import DataError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

ENTITY_TYPES = ("PER", "ORG", "LOC")
IOB2_TAGS = ("B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC", "O")
MARKER_TAGS = ("X", "CLS", "SEP", "PAD")
ALL_TAGS = IOB2_TAGS + MARKER_TAGS

MAX_WORD_CHARS = 100  # longer words tokenize to [UNK]


class TagSet:
    """The 11 tags: 7 IOB2 tags plus X/CLS/SEP/PAD markers, densely numbered."""

    def __init__(self):
        self.tags = list(ALL_TAGS)
        self.tag_to_id = {t: i for i, t in enumerate(self.tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def id(self, tag: str) -> int:
        try:
            return self.tag_to_id[tag]
        except KeyError:
            raise DataError(f"unknown tag {tag!r}") from None

    def tag(self, tag_id: int) -> str:
        return self.tags[tag_id]

    def is_iob2(self, tag: str) -> bool:
        return tag in IOB2_TAGS


class WordPieceVocab:
    """Ordered piece list with dense ids; continuations carry a ``##`` prefix."""

    def __init__(self, pieces: list[str]):
        if list(pieces[:4]) != list(RESERVED_TOKENS):
            raise DataError(f"vocabulary must start with {RESERVED_TOKENS}")
        if len(set(pieces)) != len(pieces):
            raise DataError("duplicate pieces in vocabulary")
        self.pieces = list(pieces)
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        self.pad_id = self.piece_to_id[PAD_TOKEN]
        self.unk_id = self.piece_to_id[UNK_TOKEN]
        self.cls_id = self.piece_to_id[CLS_TOKEN]
        self.sep_id = self.piece_to_id[SEP_TOKEN]
        self._max_piece_chars = max((len(p) for p in self.pieces), default=0)

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.piece_to_id

    def id(self, piece: str) -> int:
        return self.piece_to_id.get(piece, self.unk_id)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for piece in self.pieces:
                fh.write(piece + "\n")

    @classmethod
    def load(cls, path) -> "WordPieceVocab":
        with open(path, encoding="utf-8") as fh:
            pieces = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(pieces)


def normalize_word(word: str) -> str:
    """Strip accents, preserve casing."""
    decomposed = unicodedata.normalize("NFD", word)
    return "".join(ch for ch in decomposed if unicodedata.category(ch) != "Mn")


def pre_split(text: str) -> list[str]:
    """Split raw text on whitespace and punctuation (punctuation kept as words)."""
    words: list[str] = []
    current: list[str] = []
    for ch in text:
        if ch.isspace():
            if current:
                words.append("".join(current))
                current = []
        elif unicodedata.category(ch).startswith("P"):
            if current:
                words.append("".join(current))
                current = []
            words.append(ch)
        else:
            current.append(ch)
    if current:
        words.append("".join(current))
    return words


def _word_symbols(word: str) -> list[str]:
    return [word[0]] + ["##" + ch for ch in word[1:]]


def build_vocab(corpus: dict[str, int], size: int) -> WordPieceVocab:
    """Learn a wordpiece vocabulary of at most `size` pieces.

    Starts from single characters and repeatedly merges the most frequent
    adjacent piece pair (ties broken lexicographically), so every corpus
    word up to MAX_WORD_CHARS characters re-tokenizes without [UNK].
    """
    sequences: list[tuple[list[str], int]] = []
    base: set[str] = set()
    for word, count in sorted(corpus.items()):
        norm = normalize_word(word)
        if not norm or len(norm) > MAX_WORD_CHARS:
            continue
        symbols = _word_symbols(norm)
        sequences.append((symbols, count))
        base.update(symbols)

    min_size = len(base) + len(RESERVED_TOKENS)
    if size < min_size:
        raise DataError(
            f"vocabulary size {size} too small; need at least {min_size} "
            f"({len(base)} character pieces + {len(RESERVED_TOKENS)} reserved)"
        )

    pieces = list(RESERVED_TOKENS) + sorted(base)
    known = set(pieces)
    budget = size - len(pieces)

    while budget > 0:
        pair_counts: dict[tuple[str, str], int] = {}
        for symbols, count in sequences:
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + count
        if not pair_counts:
            break
        (left, right), _ = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        merged = left + right[2:]
        for si, (symbols, count) in enumerate(sequences):
            j = 0
            out = []
            while j < len(symbols):
                if j + 1 < len(symbols) and symbols[j] == left and symbols[j + 1] == right:
                    out.append(merged)
                    j += 2
                else:
                    out.append(symbols[j])
                    j += 1
            sequences[si] = (out, count)
        if merged not in known:
            pieces.append(merged)
            known.add(merged)
            budget -= 1

    return WordPieceVocab(pieces)


def tokenize(word: str, vocab: WordPieceVocab) -> list[str]:
    """Greedy longest-match split of one pre-split word into pieces.

    Returns [UNK] when the word cannot be covered or exceeds
    MAX_WORD_CHARS characters.
    """
    if not word:
        raise DataError("cannot tokenize an empty word")
    norm = normalize_word(word)
    if not norm or len(norm) > MAX_WORD_CHARS:
        return [UNK_TOKEN]
    pieces: list[str] = []
    start = 0
    n = len(norm)
    while start < n:
        prefix = "##" if start > 0 else ""
        end = min(n, start + vocab._max_piece_chars)
        found = None
        while end > start:
            candidate = prefix + norm[start:end]
            if candidate in vocab:
                found = candidate
                break
            end -= 1
        if found is None:
            return [UNK_TOKEN]
        pieces.append(found)
        start = end
    return pieces


@dataclass
class EncodedExample:
    """One sentence laid out for the models: ids, tags, and word starts."""

    piece_ids: np.ndarray  # (K,) int64
    tag_ids: np.ndarray  # (K,) int64
    word_starts: np.ndarray  # (K,) bool
    language: str
    n_words: int

    def __len__(self) -> int:
        return len(self.piece_ids)


def encode_words(
    words: list[str], vocab: WordPieceVocab, max_len: int
) -> tuple[list[int], list[bool], list[int]]:
    """Tokenize words into the [CLS] ... [SEP] [PAD] layout (no tags).

    Returns (piece_ids, word_starts, word_index_per_content_piece); the
    last list maps each kept content piece back to its source word.
    """
    capacity = max_len - 2
    ids: list[int] = []
    starts: list[bool] = []
    word_of: list[int] = []
    for wi, word in enumerate(words):
        for pi, piece in enumerate(tokenize(word, vocab)):
            if len(ids) >= capacity:
                break
            ids.append(vocab.id(piece))
            starts.append(pi == 0)
            word_of.append(wi)
    piece_ids = [vocab.cls_id] + ids + [vocab.sep_id]
    word_starts = [False] + starts + [False]
    pad = max_len - len(piece_ids)
    piece_ids += [vocab.pad_id] * pad
    word_starts += [False] * pad
    return piece_ids, word_starts, word_of


def encode_sentence(sent, vocab: WordPieceVocab, tagset: TagSet, max_len: int) -> EncodedExample:
    """Encode a tagged sentence; continuation pieces get tag X, pads get PAD."""
    if len(sent.words) < 1:
        raise DataError("cannot encode an empty sentence")
    for tag in sent.tags:
        if tag not in IOB2_TAGS:
            raise DataError(
                f"unknown gold tag {tag!r} in {sent.language} sentence "
                f"{' '.join(sent.words)!r}"
            )
    piece_ids, word_starts, word_of = encode_words(list(sent.words), vocab, max_len)
    tag_ids = [tagset.id("PAD")] * max_len
    tag_ids[0] = tagset.id("CLS")
    x_id = tagset.id("X")
    for offset, wi in enumerate(word_of):
        pos = 1 + offset
        tag_ids[pos] = tagset.id(sent.tags[wi]) if word_starts[pos] else x_id
    sep_pos = 1 + len(word_of)
    tag_ids[sep_pos] = tagset.id("SEP")
    return EncodedExample(
        piece_ids=np.array(piece_ids, dtype=np.int64),
        tag_ids=np.array(tag_ids, dtype=np.int64),
        word_starts=np.array(word_starts, dtype=bool),
        language=sent.language,
        n_words=len(sent.words),
    )


def align_predictions(example: EncodedExample, piece_tags) -> list[str]:
    """Map per-piece predicted tag ids back to one IOB2 tag per word.

    Takes the prediction at each word-start piece; marker tags predicted at
    a word start fall back to O, as do words dropped by truncation.
    """
    piece_tags = np.asarray(piece_tags)
    if len(piece_tags) != len(example.piece_ids):
        raise DataError(
            f"got {len(piece_tags)} piece tags for a length-{len(example.piece_ids)} example"
        )
    tagset = TagSet()
    word_tags: list[str] = []
    for pos in np.nonzero(example.word_starts)[0]:
        tag = tagset.tag(int(piece_tags[pos]))
        word_tags.append(tag if tag in IOB2_TAGS else "O")
    while len(word_tags) < example.n_words:
        word_tags.append("O")
    return word_tags
