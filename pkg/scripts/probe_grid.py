"""Probe: teacher F1 across vocab size and training length."""
import sys
import time

from distillab.cli import _corpus_word_freqs
from distillab.data import generate_synthetic
from distillab.inference import evaluate_tagger
from distillab.models import TeacherConfig
from distillab.teacher import finetune_teacher
from distillab.tokenizer import build_vocab

corpus = generate_synthetic(5, 100, 20000, seed=0)
freqs = _corpus_word_freqs(corpus)
print(f"distinct words: {len(freqs)}")

for vocab_size in (300, 500, 800):
    vocab = build_vocab(freqs, vocab_size)
    import numpy as np
    from distillab.tokenizer import TagSet, encode_sentence
    lens = []
    for s in corpus.labeled[:200]:
        ex = encode_sentence(s, vocab, TagSet(), 64)
        lens.append(int((ex.piece_ids != 0).sum()))
    maxlen = int(np.percentile(lens, 100))
    print(f"V={len(vocab)} maxpieces={maxlen}")
    for epochs in (30,):
        config = TeacherConfig(vocab_size=len(vocab), width=64, layers=4, n_heads=4, max_len=28)
        t0 = time.time()
        teacher, history = finetune_teacher(corpus, vocab, config, epochs=epochs, seed=0, batch_size=64)
        report = evaluate_tagger(teacher, corpus.dev, vocab, 28)
        print(
            f"  V={len(vocab)} epochs={epochs}: {time.time()-t0:.0f}s "
            f"dev_loss={min(h['dev_loss'] for h in history):.4f} F1={report.mean_f1:.4f}"
        )
