"""Probe: error anatomy for the teacher on dev."""
from collections import Counter

from distillab.cli import _corpus_word_freqs
from distillab.data import generate_synthetic
from distillab.inference import predict_tags
from distillab.models import TeacherConfig
from distillab.teacher import finetune_teacher
from distillab.tokenizer import build_vocab

corpus = generate_synthetic(5, 100, 20000, seed=0)
vocab = build_vocab(_corpus_word_freqs(corpus), 800)
config = TeacherConfig(vocab_size=len(vocab), width=64, layers=4, n_heads=4, max_len=24)
teacher, _ = finetune_teacher(corpus, vocab, config, epochs=30, seed=0, batch_size=32, lr_high=3e-3)

train_words = set()
for s in corpus.labeled:
    train_words.update(s.words)

kinds = Counter()
examples = []
for lang, sents in corpus.dev.items():
    preds = predict_tags(teacher, sents, vocab, 24)
    for sent, pred in zip(sents, preds):
        for w, g, p in zip(sent.words, sent.tags, pred):
            if g != p:
                seen = "seen" if w in train_words else "UNSEEN"
                key = (g, p, seen)
                kinds[key] += 1
                if len(examples) < 25:
                    examples.append((lang, w, g, p, seen, " ".join(sent.words)))

print("top confusions (gold, pred, word-seen-in-train):")
for key, count in kinds.most_common(15):
    print(f"  {key}: {count}")
print()
for ex in examples[:20]:
    print(" ", ex)
