"""Shared prediction and scoring paths over encoded sentences."""
from __future__ import annotations

import numpy as np

from .data import TaggedSentence
from .evaluation import EvalReport, extract_spans
from .tokenizer import TagSet, WordPieceVocab, encode_sentence, align_predictions

__all__ = ["encode_labeled", "predict_tags", "evaluate_tagger"]


def encode_labeled(
    sentences: list[TaggedSentence], vocab: WordPieceVocab, tagset: TagSet, max_len: int
):
    """Encode a sentence list into stacked id/tag/mask arrays plus examples."""
    examples = [encode_sentence(s, vocab, tagset, max_len) for s in sentences]
    ids = np.stack([e.piece_ids for e in examples])
    tag_ids = np.stack([e.tag_ids for e in examples])
    mask = (ids != vocab.pad_id).astype(np.float64)
    return ids, tag_ids, mask, examples


def predict_tags(
    model,
    sentences: list[TaggedSentence],
    vocab: WordPieceVocab,
    max_len: int,
    batch_size: int = 256,
    head: str = "softmax",
) -> list[list[str]]:
    """Word-level IOB2 predictions for each sentence.

    head='softmax' decodes the tag distribution; head='logit' decodes the
    regression head, the only trained classifier before the final stage of
    the sequential strategies.
    """
    tagset = TagSet()
    ids, _, _, examples = encode_labeled(sentences, vocab, tagset, max_len)
    out: list[list[str]] = []
    for lo in range(0, len(examples), batch_size):
        chunk = ids[lo : lo + batch_size]
        if head == "logit" and hasattr(model, "predict_scores"):
            scores = model.predict_scores(chunk)
        else:
            scores = model.predict_probs(chunk)
        pred_ids = scores.argmax(axis=-1)
        for row, example in zip(pred_ids, examples[lo : lo + batch_size]):
            out.append(align_predictions(example, row))
    return out


def evaluate_tagger(
    model,
    splits: dict[str, list[TaggedSentence]],
    vocab: WordPieceVocab,
    max_len: int,
    batch_size: int = 256,
    head: str = "softmax",
    model_per_language: dict[str, object] | None = None,
) -> EvalReport:
    """Span-level report per language, aggregated across languages."""
    gold, pred = {}, {}
    for lang, sentences in splits.items():
        lang_model = model_per_language[lang] if model_per_language else model
        predictions = predict_tags(lang_model, sentences, vocab, max_len, batch_size, head)
        gold[lang] = [extract_spans(list(s.tags)) for s in sentences]
        pred[lang] = [extract_spans(tags) for tags in predictions]
    return EvalReport.from_language_spans(gold, pred)
