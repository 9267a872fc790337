"""Sklearn-style estimators wrapping the training pipelines.

These are the main Python entry points: a teacher tagger and a distilled
student tagger with fit/predict, and a truncated-SVD embedding reducer
with fit/transform. All hyperparameters are constructor arguments, so
the estimators clone and grid-search cleanly with scikit-learn tooling.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import Corpus, TaggedSentence
from .distil import TrainSettings, run_strategy, strategy_spec
from .embed_compress import svd_factor, svd_reduce
from .errors import ConfigurationError, DataError
from .inference import evaluate_tagger, predict_tags
from .losses import LossWeights
from .models import StudentConfig, TeacherConfig, init_embeddings
from .teacher import default_trace_layer, finetune_teacher, read_trace, trace_transfer_set
from .tokenizer import build_vocab

__all__ = ["TeacherTagger", "DistilledTagger", "SvdEmbeddingReducer"]


def _check_tagged(X, y, languages):
    if len(X) != len(y):
        raise DataError(f"{len(X)} sentences but {len(y)} tag sequences")
    if languages is None:
        languages = ["xx"] * len(X)
    if len(languages) != len(X):
        raise DataError("languages must align with X")
    sentences = []
    for words, tags, lang in zip(X, y, languages):
        words = [str(w) for w in words]
        tags = [str(t) for t in tags]
        sentences.append(TaggedSentence(words=words, tags=tags, language=str(lang)))
    return sentences


def _split_by_language(sentences):
    out: dict[str, list[TaggedSentence]] = {}
    for sent in sentences:
        out.setdefault(sent.language, []).append(sent)
    return out


def _count_words(sentence_lists):
    freqs: dict[str, int] = {}
    for sentences in sentence_lists:
        for words in sentences:
            for word in words:
                freqs[str(word)] = freqs.get(str(word), 0) + 1
    return freqs


class TeacherTagger(BaseEstimator):
    """Transformer-encoder sequence tagger trained with cross-entropy.

    fit(X, y) learns a wordpiece vocabulary from X (unless one is given)
    and fine-tunes the encoder end-to-end; predict(X) returns IOB2 tags
    per word.
    """

    def __init__(
        self,
        width: int = 64,
        layers: int = 4,
        heads: int = 4,
        max_len: int = 24,
        vocab_size: int = 2000,
        epochs: int = 30,
        batch_size: int = 64,
        dropout: float = 0.2,
        lr_high: float = 1e-3,
        lr_low: float = 1e-8,
        seed: int = 0,
    ):
        self.width = width
        self.layers = layers
        self.heads = heads
        self.max_len = max_len
        self.vocab_size = vocab_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.dropout = dropout
        self.lr_high = lr_high
        self.lr_low = lr_low
        self.seed = seed

    def fit(self, X, y, languages=None, X_dev=None, y_dev=None, dev_languages=None, vocab=None, extra_words=None):
        sentences = _check_tagged(X, y, languages)
        corpus = Corpus(labeled=sentences)
        if X_dev is not None:
            corpus.dev = _split_by_language(_check_tagged(X_dev, y_dev, dev_languages))
        if vocab is not None:
            self.vocab_ = vocab
        else:
            word_lists = [X]
            if X_dev is not None:
                word_lists.append(X_dev)
            if extra_words is not None:
                word_lists.append(extra_words)
            self.vocab_ = build_vocab(_count_words(word_lists), self.vocab_size)
        config = TeacherConfig(
            vocab_size=len(self.vocab_),
            width=self.width,
            layers=self.layers,
            n_heads=self.heads,
            max_len=self.max_len,
            dropout=self.dropout,
        )
        self.model_, self.history_ = finetune_teacher(
            corpus,
            self.vocab_,
            config,
            epochs=self.epochs,
            seed=self.seed,
            batch_size=self.batch_size,
            lr_high=self.lr_high,
            lr_low=self.lr_low,
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X, languages=None):
        self._check_fitted()
        sentences = _check_tagged(X, [["O"] * len(words) for words in X], languages)
        return predict_tags(self.model_, sentences, self.vocab_, self.max_len)

    def score(self, X, y, languages=None):
        """Cross-language mean span F1."""
        self._check_fitted()
        sentences = _check_tagged(X, y, languages)
        report = evaluate_tagger(
            self.model_, _split_by_language(sentences), self.vocab_, self.max_len
        )
        return report.mean_f1

    def export_traces(self, X_unlabeled, path, layer: int | None = None):
        """Record logits and layer representations over unlabeled sentences."""
        self._check_fitted()
        layer = layer or default_trace_layer(self.layers)
        trace_transfer_set(
            self.model_,
            [tuple(str(w) for w in words) for words in X_unlabeled],
            self.vocab_,
            layer,
            path,
        )
        return path


class DistilledTagger(BaseEstimator):
    """BiLSTM (or small transformer) student distilled from a teacher.

    fit(X, y, X_unlabeled=...) runs the full pipeline: fine-tune the
    teacher (unless a fitted one is supplied), trace the transfer set,
    then run the configured distillation strategy.
    """

    def __init__(
        self,
        strategy: str = "D42",
        emb_dim: int = 16,
        hidden: int = 24,
        arch: str = "bilstm",
        depth: int = 2,
        max_len: int = 24,
        dropout: float = 0.2,
        embedding_init: str = "random",
        teacher: TeacherTagger | None = None,
        trace_layer: int | None = None,
        alpha: float = 1.0,
        beta: float = 1.0,
        gamma: float = 1.0,
        kld_direction: str = "forward",
        batch_size: int = 512,
        lr_high: float = 1e-3,
        lr_low: float = 1e-8,
        epochs_per_layer: int = 10,
        patience: int = 3,
        seed: int = 0,
    ):
        self.strategy = strategy
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.arch = arch
        self.depth = depth
        self.max_len = max_len
        self.dropout = dropout
        self.embedding_init = embedding_init
        self.teacher = teacher
        self.trace_layer = trace_layer
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.kld_direction = kld_direction
        self.batch_size = batch_size
        self.lr_high = lr_high
        self.lr_low = lr_low
        self.epochs_per_layer = epochs_per_layer
        self.patience = patience
        self.seed = seed

    def fit(
        self,
        X,
        y,
        languages=None,
        X_unlabeled=None,
        X_dev=None,
        y_dev=None,
        dev_languages=None,
    ):
        spec = strategy_spec(
            self.strategy, weights=LossWeights(self.alpha, self.beta, self.gamma)
        )
        sentences = _check_tagged(X, y, languages)
        corpus = Corpus(labeled=sentences)
        if X_dev is not None:
            corpus.dev = _split_by_language(_check_tagged(X_dev, y_dev, dev_languages))
        needs_traces = any(s.needs_traces for s in spec.stages)
        if needs_traces and X_unlabeled is None:
            raise ConfigurationError(
                f"strategy {spec.id} needs X_unlabeled for the transfer set"
            )

        teacher = self.teacher
        if needs_traces and teacher is None:
            teacher = TeacherTagger(max_len=self.max_len, seed=self.seed)
            teacher.fit(
                X, y, languages=languages,
                X_dev=X_dev, y_dev=y_dev, dev_languages=dev_languages,
                extra_words=X_unlabeled,
            )
        if teacher is not None:
            if not hasattr(teacher, "model_"):
                raise NotFittedError("the supplied teacher is not fitted")
            self.vocab_ = teacher.vocab_
            teacher_dim = teacher.width
        else:
            word_lists = [X] + ([X_unlabeled] if X_unlabeled is not None else [])
            if X_dev is not None:
                word_lists.append(X_dev)
            self.vocab_ = build_vocab(_count_words(word_lists), 2000)
            teacher_dim = 64

        traces = None
        if needs_traces:
            with tempfile.TemporaryDirectory() as tmp:
                path = Path(tmp) / "transfer.trace"
                teacher.export_traces(X_unlabeled, path, layer=self.trace_layer)
                traces = read_trace(path)

        config = StudentConfig(
            vocab_size=len(self.vocab_),
            emb_dim=self.emb_dim,
            hidden=self.hidden,
            teacher_dim=teacher_dim,
            arch=self.arch,
            depth=self.depth,
            max_len=self.max_len,
            dropout=self.dropout,
        )
        embeddings = None
        if self.embedding_init == "svd":
            if teacher is None:
                raise ConfigurationError("svd embedding init needs a teacher")
            embeddings = init_embeddings(
                "svd", len(self.vocab_), self.emb_dim, matrix=teacher.model_.piece_emb.data
            )
        settings = TrainSettings(
            batch_size=self.batch_size,
            lr_high=self.lr_high,
            lr_low=self.lr_low,
            epochs_per_layer=self.epochs_per_layer,
            patience=self.patience,
            kld_direction=self.kld_direction,
        )
        result = run_strategy(
            spec, corpus, traces, self.vocab_, config, self.seed, settings,
            embeddings=embeddings,
        )
        self.result_ = result
        self.model_ = result.model
        self.teacher_ = teacher
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X, languages=None):
        self._check_fitted()
        sentences = _check_tagged(X, [["O"] * len(words) for words in X], languages)
        if self.result_.per_language is not None:
            out = []
            for sent in sentences:
                model = self.result_.model_for(sent.language)
                out.extend(predict_tags(model, [sent], self.vocab_, self.max_len))
            return out
        return predict_tags(self.model_, sentences, self.vocab_, self.max_len)

    def score(self, X, y, languages=None):
        """Cross-language mean span F1."""
        self._check_fitted()
        sentences = _check_tagged(X, y, languages)
        report = self.result_.evaluate(_split_by_language(sentences), self.vocab_, self.max_len)
        return report.mean_f1


class SvdEmbeddingReducer(TransformerMixin, BaseEstimator):
    """Truncated-SVD row compressor for embedding matrices.

    fit(X) finds the top right-singular directions of X; transform maps
    rows into the reduced space (U_E * Sigma_E for the training matrix).
    """

    def __init__(self, n_components: int = 50):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if not (1 <= self.n_components <= min(X.shape)):
            raise ConfigurationError(
                f"n_components {self.n_components} out of range for {X.shape}"
            )
        sigmas, V = svd_factor(X)
        self.singular_values_ = sigmas[: self.n_components]
        self.components_ = V[:, : self.n_components].T  # (E, D) like sklearn
        return self

    def transform(self, X):
        if not hasattr(self, "components_"):
            raise NotFittedError("call fit before transform")
        X = np.asarray(X, dtype=np.float64)
        return X @ self.components_.T

    def reduce(self, X):
        """One-shot reduction, identical to svd_reduce."""
        return svd_reduce(X, self.n_components)
