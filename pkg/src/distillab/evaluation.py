"""Span-level (phrase) precision/recall/F1 and cross-language aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "Span",
    "extract_spans",
    "span_f1",
    "aggregate_languages",
    "EvalReport",
    "sentence_accuracy",
]


@dataclass(frozen=True, order=True)
class Span:
    entity_type: str
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if self.start > self.end:
            raise DataError(f"span start {self.start} after end {self.end}")


def extract_spans(tags) -> set[Span]:
    """Maximal B-X (I-X)* runs; a stray I-X opens a new span."""
    spans: set[Span] = set()
    start = None
    etype = None

    def close(end):
        nonlocal start, etype
        if start is not None:
            spans.add(Span(entity_type=etype, start=start, end=end))
        start, etype = None, None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i - 1)
        elif tag.startswith("B-"):
            close(i - 1)
            start, etype = i, tag[2:]
        elif tag.startswith("I-"):
            if etype != tag[2:]:
                close(i - 1)
                start, etype = i, tag[2:]
        else:
            raise DataError(f"not an IOB2 tag: {tag!r}")
    close(len(tags) - 1)
    return spans


def span_f1(gold: list[set[Span]], pred: list[set[Span]]) -> tuple[float, float, float]:
    """Micro-averaged exact-match precision, recall, F1 over sentences."""
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    matches = sum(len(g & p) for g, p in zip(gold, pred))
    n_pred = sum(len(p) for p in pred)
    n_gold = sum(len(g) for g in gold)
    precision = matches / n_pred if n_pred else 0.0
    recall = matches / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def aggregate_languages(f1_scores: list[float]) -> tuple[float, float]:
    """Mean and population standard deviation of per-language F1."""
    if not f1_scores:
        raise DataError("no language scores to aggregate")
    arr = np.asarray(f1_scores, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def sentence_accuracy(gold_labels, pred_labels) -> float:
    """Plain accuracy for the sentence-classification mode."""
    if len(gold_labels) != len(pred_labels):
        raise DataError("label count mismatch")
    if not gold_labels:
        return 0.0
    hits = sum(1 for g, p in zip(gold_labels, pred_labels) if g == p)
    return hits / len(gold_labels)


@dataclass
class EvalReport:
    """Per-language P/R/F1/support plus the cross-language mean and spread."""

    per_language: dict[str, tuple[float, float, float, int]]
    mean_f1: float
    std_f1: float

    @classmethod
    def from_language_spans(
        cls,
        gold: dict[str, list[set[Span]]],
        pred: dict[str, list[set[Span]]],
    ) -> "EvalReport":
        per_language = {}
        for lang in gold:
            p, r, f1 = span_f1(gold[lang], pred[lang])
            support = sum(len(s) for s in gold[lang])
            per_language[lang] = (p, r, f1, support)
        mean, std = aggregate_languages([v[2] for v in per_language.values()])
        return cls(per_language=per_language, mean_f1=mean, std_f1=std)

    def table(self) -> str:
        lines = [f"{'language':<10} {'P':>8} {'R':>8} {'F1':>8} {'support':>8}"]
        for lang in sorted(self.per_language):
            p, r, f1, support = self.per_language[lang]
            lines.append(f"{lang:<10} {p:>8.4f} {r:>8.4f} {f1:>8.4f} {support:>8d}")
        lines.append(f"mean F1 = {self.mean_f1:.4f}  std = {self.std_f1:.4f}")
        return "\n".join(lines)

    def records(self) -> str:
        """Line-delimited machine-readable form: lang P R F1 support."""
        lines = []
        for lang in sorted(self.per_language):
            p, r, f1, support = self.per_language[lang]
            lines.append(f"{lang}\t{p:.6f}\t{r:.6f}\t{f1:.6f}\t{support}")
        return "\n".join(lines) + "\n"
