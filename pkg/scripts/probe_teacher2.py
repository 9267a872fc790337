"""Probe: can the teacher overfit train? Sweep lr/epochs/dropout."""
import time

from distillab.cli import _corpus_word_freqs
from distillab.data import Corpus, generate_synthetic
from distillab.inference import evaluate_tagger
from distillab.models import TeacherConfig
from distillab.teacher import finetune_teacher
from distillab.tokenizer import build_vocab

corpus = generate_synthetic(5, 100, 20000, seed=0)
freqs = _corpus_word_freqs(corpus)
vocab = build_vocab(freqs, 800)
train_split = {}
for s in corpus.labeled:
    train_split.setdefault(s.language, []).append(s)

for lr, epochs, dropout, batch in (
    (1e-3, 60, 0.2, 64),
    (3e-3, 30, 0.2, 64),
    (3e-3, 60, 0.2, 64),
    (1e-3, 30, 0.0, 64),
    (3e-3, 30, 0.2, 32),
):
    config = TeacherConfig(
        vocab_size=len(vocab), width=64, layers=4, n_heads=4, max_len=24, dropout=dropout
    )
    t0 = time.time()
    teacher, history = finetune_teacher(
        corpus, vocab, config, epochs=epochs, seed=0, batch_size=batch, lr_high=lr
    )
    train_rep = evaluate_tagger(teacher, train_split, vocab, 24)
    dev_rep = evaluate_tagger(teacher, corpus.dev, vocab, 24)
    print(
        f"lr={lr} epochs={epochs} drop={dropout} batch={batch}: {time.time()-t0:.0f}s "
        f"train_F1={train_rep.mean_f1:.4f} dev_F1={dev_rep.mean_f1:.4f} "
        f"best_dev_loss={min(h['dev_loss'] for h in history):.4f}"
    )
