"""Probe: teacher quality and speed on the acceptance-scale benchmark."""
import sys
import time

from distillab.cli import _corpus_word_freqs
from distillab.data import generate_synthetic
from distillab.inference import evaluate_tagger
from distillab.models import TeacherConfig
from distillab.teacher import finetune_teacher
from distillab.tokenizer import build_vocab

t0 = time.time()
corpus = generate_synthetic(5, 100, 20000, seed=0)
print(f"corpus: {time.time()-t0:.1f}s, labeled={len(corpus.labeled)}, unl={len(corpus.unlabeled)}")

t0 = time.time()
vocab = build_vocab(_corpus_word_freqs(corpus), 2000)
print(f"vocab: {time.time()-t0:.1f}s, size={len(vocab)}")

# how long do encoded sentences get?
from distillab.tokenizer import TagSet, encode_sentence
import numpy as np
lens = []
for s in corpus.labeled + corpus.dev_sentences():
    ex = encode_sentence(s, vocab, TagSet(), 64)
    lens.append(int((ex.piece_ids != 0).sum()))
lens = np.array(lens)
print(f"encoded lengths: mean={lens.mean():.1f} p95={np.percentile(lens,95):.0f} max={lens.max()}")

config = TeacherConfig(vocab_size=len(vocab), width=64, layers=4, n_heads=4, max_len=24)
t0 = time.time()
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
teacher, history = finetune_teacher(corpus, vocab, config, epochs=epochs, seed=0, batch_size=64)
dt = time.time() - t0
print(f"teacher: {dt:.1f}s for {epochs} epochs ({dt/epochs:.1f}s/epoch)")
for h in history:
    print(f"  epoch {h['epoch']}: train={h['train_loss']:.4f} dev={h['dev_loss']:.4f}")

t0 = time.time()
report = evaluate_tagger(teacher, corpus.dev, vocab, 24)
print(f"dev eval: {time.time()-t0:.1f}s  mean F1={report.mean_f1:.4f} std={report.std_f1:.4f}")
for lang, (p, r, f1, support) in sorted(report.per_language.items()):
    print(f"  {lang}: P={p:.3f} R={r:.3f} F1={f1:.3f} n={support}")
