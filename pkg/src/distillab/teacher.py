"""Teacher fine-tuning and one-shot transfer-set tracing.

Traces decouple the student pipeline from the teacher: logits and one
chosen layer's representations are computed once over the unlabeled
transfer set and persisted in a binary file the distillation stages read
back. Arrays are stored as 32-bit floats and promoted to 64-bit when
batches are assembled.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import Corpus
from .errors import ConfigurationError, DataError, TrainingError
from .inference import encode_labeled
from .losses import ce_loss, make_onehot
from .models import TeacherConfig, TeacherModel
from .nn import AdamState, CosineSchedule, adam_step, cosine_lr, no_grad, softmax
from .tokenizer import TagSet, WordPieceVocab, encode_words

__all__ = ["TraceSet", "finetune_teacher", "trace_transfer_set", "read_trace", "default_trace_layer"]

TRACE_MAGIC = b"XDTR"
TRACE_VERSION = 1


def default_trace_layer(n_layers: int) -> int:
    """Middle layer: shallow students mimic mid-depth representations best."""
    return max(1, math.ceil(n_layers / 2))


@dataclass
class TraceSet:
    """In-memory trace records: per sentence piece ids, logits, and reps."""

    n_tags: int
    width: int
    layer: int
    piece_ids: list[np.ndarray] = field(default_factory=list)  # (K,) uint32
    logits: list[np.ndarray] = field(default_factory=list)  # (K, C) float32
    reps: list[np.ndarray] = field(default_factory=list)  # (K, D) float32
    _padded_cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_records(self) -> int:
        return len(self.piece_ids)

    def subset(self, indices) -> "TraceSet":
        return TraceSet(
            n_tags=self.n_tags,
            width=self.width,
            layer=self.layer,
            piece_ids=[self.piece_ids[i] for i in indices],
            logits=[self.logits[i] for i in indices],
            reps=[self.reps[i] for i in indices],
        )

    def padded(self, max_len: int, pad_id: int = 0):
        """Stacked (ids, mask, logits, reps) arrays padded to max_len."""
        if max_len not in self._padded_cache:
            n = self.num_records
            ids = np.full((n, max_len), pad_id, dtype=np.int64)
            mask = np.zeros((n, max_len), dtype=np.float64)
            logits = np.zeros((n, max_len, self.n_tags), dtype=np.float32)
            reps = np.zeros((n, max_len, self.width), dtype=np.float32)
            for i in range(n):
                k = len(self.piece_ids[i])
                if k > max_len:
                    raise DataError(
                        f"trace record {i} has {k} pieces, longer than max_len {max_len}"
                    )
                ids[i, :k] = self.piece_ids[i]
                mask[i, :k] = 1.0
                logits[i, :k] = self.logits[i]
                reps[i, :k] = self.reps[i]
            self._padded_cache[max_len] = (ids, mask, logits, reps)
        return self._padded_cache[max_len]

    def batch(self, indices, max_len: int, pad_id: int = 0):
        ids, mask, logits, reps = self.padded(max_len, pad_id)
        sel = np.asarray(indices)
        return (
            ids[sel],
            mask[sel],
            logits[sel].astype(np.float64),
            reps[sel].astype(np.float64),
        )


def finetune_teacher(
    corpus: Corpus,
    vocab: WordPieceVocab,
    config: TeacherConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
    lr_high: float = 1e-3,
    lr_low: float = 1e-8,
) -> tuple[TeacherModel, list[dict]]:
    """Train the teacher end-to-end with cross-entropy on the labeled set.

    Keeps the best checkpoint by dev loss and restores it before
    returning. Returns (model, per-epoch history records). epochs=0
    returns the untouched initialization.
    """
    if not corpus.labeled:
        raise ConfigurationError("cannot fine-tune a teacher without labeled data")
    tagset = TagSet()
    model = TeacherModel(config, seed=seed)
    if epochs == 0:
        return model, []

    ids, tag_ids, mask, _ = encode_labeled(corpus.labeled, vocab, tagset, config.max_len)
    onehot = make_onehot(tag_ids, config.n_tags)
    dev_sents = corpus.dev_sentences()
    if dev_sents:
        dev_ids, dev_tags, dev_mask, _ = encode_labeled(dev_sents, vocab, tagset, config.max_len)
        dev_onehot = make_onehot(dev_tags, config.n_tags)
    else:
        dev_ids = None

    n = len(ids)
    steps_per_epoch = math.ceil(n / batch_size)
    schedule = CosineSchedule(lr_high, lr_low, horizon=epochs * steps_per_epoch)
    state = AdamState()
    drop_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD209]))

    def dev_loss() -> float:
        if dev_ids is None:
            return float("nan")
        with no_grad():
            logits, _ = model.forward(dev_ids, train=False)
            probs = softmax(logits, axis=-1)
            return ce_loss(probs, dev_onehot, dev_mask).item()

    best_loss = dev_loss()
    best_snapshot = model.snapshot()
    history: list[dict] = []
    step = 0
    for epoch in range(1, epochs + 1):
        order_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE90C, epoch]))
        order = order_rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            logits, _ = model.forward(ids[sel], train=True, rng=drop_rng)
            probs = softmax(logits, axis=-1)
            loss = ce_loss(probs, onehot[sel], mask[sel])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(
                    f"teacher fine-tuning diverged at epoch {epoch} (loss={value})"
                )
            loss.backward()
            adam_step(model.groups, state, cosine_lr(step, schedule))
            step += 1
            epoch_losses.append(value)
        current = dev_loss()
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "dev_loss": current}
        )
        if dev_ids is not None and current < best_loss:
            best_loss = current
            best_snapshot = model.snapshot()
    if dev_ids is not None:
        model.restore(best_snapshot)
    return model, history


def trace_transfer_set(
    teacher: TeacherModel,
    unlabeled: list[tuple[str, ...]],
    vocab: WordPieceVocab,
    layer: int,
    out_path,
    batch_size: int = 256,
) -> None:
    """Record teacher logits and layer-`layer` reps for every sentence.

    Records are written in input order; PAD positions are trimmed so the
    file stores exactly the content pieces (CLS and SEP included).
    """
    if not (1 <= layer <= teacher.config.layers):
        raise ConfigurationError(
            f"trace layer {layer} out of range 1..{teacher.config.layers}"
        )
    max_len = teacher.config.max_len
    c = teacher.config
    with open(out_path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<IIIII", TRACE_VERSION, c.n_tags, c.width, layer, len(unlabeled)))
        for lo in range(0, len(unlabeled), batch_size):
            chunk = unlabeled[lo : lo + batch_size]
            ids = np.stack(
                [np.array(encode_words(list(w), vocab, max_len)[0], dtype=np.int64) for w in chunk]
            )
            logits, reps = teacher.export(ids, layer=layer)
            for row_ids, row_logits, row_reps in zip(ids, logits, reps):
                k = int((row_ids != vocab.pad_id).sum())
                fh.write(struct.pack("<I", k))
                fh.write(row_ids[:k].astype("<u4").tobytes())
                fh.write(row_logits[:k].astype("<f4").tobytes())
                fh.write(row_reps[:k].astype("<f4").tobytes())


def read_trace(path) -> TraceSet:
    """Read a trace file back into memory, bit-exactly."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TRACE_MAGIC:
            raise DataError(f"{path}: not a trace file (bad magic {magic!r})")
        version, n_tags, width, layer, count = struct.unpack("<IIIII", fh.read(20))
        if version != TRACE_VERSION:
            raise DataError(f"{path}: unsupported trace version {version}")
        traces = TraceSet(n_tags=n_tags, width=width, layer=layer)
        for i in range(count):
            raw = fh.read(4)
            if len(raw) != 4:
                raise DataError(f"{path}: truncated at record {i}")
            (k,) = struct.unpack("<I", raw)
            ids = np.frombuffer(fh.read(4 * k), dtype="<u4")
            logits = np.frombuffer(fh.read(4 * k * n_tags), dtype="<f4").reshape(k, n_tags)
            reps = np.frombuffer(fh.read(4 * k * width), dtype="<f4").reshape(k, width)
            if len(ids) != k or logits.shape[0] != k or reps.shape[0] != k:
                raise DataError(f"{path}: truncated arrays in record {i}")
            traces.piece_ids.append(ids.astype(np.int64))
            traces.logits.append(logits)
            traces.reps.append(reps)
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after {count} records")
    return traces
