"""Probe: strategy quality/timing on the acceptance-scale benchmark."""
import sys
import time

from distillab.cli import _corpus_word_freqs
from distillab.data import generate_synthetic
from distillab.distil import TrainSettings, run_strategy
from distillab.inference import evaluate_tagger
from distillab.models import StudentConfig, TeacherConfig
from distillab.teacher import finetune_teacher, read_trace, trace_transfer_set
from distillab.tokenizer import build_vocab

MAX_LEN = 16
EPOCHS = int(sys.argv[2]) if len(sys.argv) > 2 else 10
PATIENCE = int(sys.argv[3]) if len(sys.argv) > 3 else 3
SEED = int(sys.argv[4]) if len(sys.argv) > 4 else 0

t_all = time.time()
corpus = generate_synthetic(5, 100, 20000, seed=0, dev_per_lang=60)
vocab = build_vocab(_corpus_word_freqs(corpus), 800)
teacher_cfg = TeacherConfig(vocab_size=len(vocab), width=64, layers=4, n_heads=4, max_len=MAX_LEN)
teacher, _ = finetune_teacher(corpus, vocab, teacher_cfg, epochs=30, seed=0, batch_size=32, lr_high=3e-3)
dev = evaluate_tagger(teacher, corpus.dev, vocab, MAX_LEN)
test = evaluate_tagger(teacher, corpus.test, vocab, MAX_LEN)
print(f"teacher ready in {time.time()-t_all:.0f}s dev={dev.mean_f1:.4f} test={test.mean_f1:.4f}")

t0 = time.time()
trace_transfer_set(teacher, corpus.unlabeled, vocab, layer=2, out_path="/tmp/probe.trace")
traces = read_trace("/tmp/probe.trace")
print(f"traces: {time.time()-t0:.0f}s")

student_cfg = StudentConfig(vocab_size=len(vocab), emb_dim=16, hidden=24, teacher_dim=64, max_len=MAX_LEN)
settings = TrainSettings(epochs_per_layer=EPOCHS, patience=PATIENCE, min_delta=1e-4)

for sid in sys.argv[1].split(","):
    t0 = time.time()
    result = run_strategy(sid, corpus, traces if sid not in ("D0", "D0S") else None,
                          vocab, student_cfg, seed=SEED, settings=settings)
    report = result.evaluate(corpus.test, vocab, MAX_LEN)
    print(f"{sid}: {time.time()-t0:.0f}s test_F1={report.mean_f1:.4f} std={report.std_f1:.4f}")
print(f"total {time.time()-t_all:.0f}s")
