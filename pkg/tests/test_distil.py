"""Strategy engine: stage structure, unfreezing, early stopping, determinism."""
import math

import numpy as np
import pytest

from distillab.data import generate_synthetic
from distillab.distil import (
    STRATEGY_IDS,
    StageSpec,
    StageState,
    StrategySpec,
    TrainHistory,
    TrainSettings,
    run_strategy,
    strategy_spec,
    unfreeze_layer,
)
from distillab.errors import ConfigurationError
from distillab.losses import LossWeights
from distillab.models import StudentConfig, StudentModel, TeacherConfig
from distillab.teacher import finetune_teacher, read_trace, trace_transfer_set
from distillab.tokenizer import build_vocab

MAX_LEN = 20


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Small corpus, vocab, fine-tuned teacher, and traces shared by tests."""
    corpus = generate_synthetic(2, 40, 120, seed=11, dev_per_lang=12, test_per_lang=12)
    freqs = {}
    for sent in corpus.labeled + corpus.dev_sentences() + corpus.test_sentences():
        for w in sent.words:
            freqs[w] = freqs.get(w, 0) + 1
    for words in corpus.unlabeled:
        for w in words:
            freqs[w] = freqs.get(w, 0) + 1
    vocab = build_vocab(freqs, size=500)
    config = TeacherConfig(vocab_size=len(vocab), width=12, layers=2, n_heads=2, max_len=MAX_LEN)
    teacher, _ = finetune_teacher(corpus, vocab, config, epochs=3, seed=0, batch_size=32)
    path = tmp_path_factory.mktemp("traces") / "transfer.trace"
    trace_transfer_set(teacher, corpus.unlabeled, vocab, layer=1, out_path=path)
    traces = read_trace(path)
    student_config = StudentConfig(
        vocab_size=len(vocab), emb_dim=8, hidden=6, teacher_dim=12, max_len=MAX_LEN
    )
    return corpus, vocab, traces, student_config


FAST = TrainSettings(batch_size=32, epochs_per_layer=1, patience=1)


def test_strategy_catalog_structure():
    assert set(STRATEGY_IDS) == {"D0", "D0S", "D1", "D2", "D31", "D32", "D41", "D42"}
    for sid in ("D0", "D0S"):
        spec = strategy_spec(sid)
        assert len(spec.stages) == 1
        assert spec.stages[0].losses == {"CE"}
        assert spec.head_input == "hidden"
    for sid in ("D41", "D42"):
        spec = strategy_spec(sid)
        assert [set(s.losses) for s in spec.stages] == [{"RL"}, {"LL"}, {"CE"}]
    for sid in ("D31", "D32"):
        spec = strategy_spec(sid)
        assert [set(s.losses) for s in spec.stages] == [{"RL"}, {"CE", "LL"}]
    for sid in STRATEGY_IDS:
        spec = strategy_spec(sid)
        assert any(s.unfreeze for s in spec.stages) == (sid in ("D32", "D42"))
    assert strategy_spec("d4.2").id == "D42"


def test_unknown_strategy_rejected():
    with pytest.raises(ConfigurationError, match="unknown strategy"):
        strategy_spec("D9")


def test_unfreeze_order_enforced():
    cfg = StudentConfig(vocab_size=10, emb_dim=4, hidden=3, teacher_dim=6, max_len=8)
    model = StudentModel(cfg, seed=0)
    for g in model.groups:
        g.set_frozen(True)
    stage = StageSpec(frozenset({"LL"}), unfreeze=True)
    state = StageState(stage_index=2, expected_steps=stage.unfreeze_order())
    with pytest.raises(ConfigurationError, match="out-of-order"):
        unfreeze_layer(model, state, "word_emb")
    unfreeze_layer(model, state, "logit_head")
    assert not model.group("logit_head").frozen
    assert model.group("word_emb").frozen
    unfreeze_layer(model, state, "projection")
    unfreeze_layer(model, state, "trunk")
    unfreeze_layer(model, state, "word_emb")
    assert all(not model.group_for_role(r).frozen for r in ("logit_head", "projection", "trunk", "word_emb"))
    with pytest.raises(ConfigurationError, match="already unfrozen"):
        unfreeze_layer(model, state, "word_emb")


def test_d42_history_structure(pipeline):
    corpus, vocab, traces, student_config = pipeline
    result = run_strategy("D42", corpus, traces, vocab, student_config, seed=0, settings=FAST)
    history = result.history
    stages = sorted({r.stage for r in history.records})
    assert stages == [1, 2, 3]
    assert history.stage_layers(1) == ["all"]
    assert history.stage_layers(2) == ["logit_head", "projection", "trunk", "word_emb"]
    assert history.stage_layers(3) == ["softmax_head", "projection", "trunk", "word_emb"]


def test_d42_best_val_non_increasing_within_stages(pipeline):
    corpus, vocab, traces, student_config = pipeline
    settings = TrainSettings(batch_size=32, epochs_per_layer=2, patience=2)
    result = run_strategy("D42", corpus, traces, vocab, student_config, seed=1, settings=settings)
    for stage in (2, 3):
        best = result.history.best_val_by_layer(stage)
        running = math.inf
        seen = []
        for value in best:
            running = min(running, value)
            seen.append(running)
        # best-so-far after each layer never increases (restore-best contract)
        assert seen == sorted(seen, reverse=True)


def test_missing_traces_is_config_error(pipeline):
    corpus, vocab, traces, student_config = pipeline
    with pytest.raises(ConfigurationError, match="traces"):
        run_strategy("D1", corpus, None, vocab, student_config, seed=0, settings=FAST)


def test_d0s_trains_without_traces(pipeline):
    corpus, vocab, traces, student_config = pipeline
    result = run_strategy("D0S", corpus, None, vocab, student_config, seed=0, settings=FAST)
    assert result.model is not None
    assert result.model.config.head_input == "hidden"
    report = result.evaluate(corpus.test, vocab, MAX_LEN)
    assert 0.0 <= report.mean_f1 <= 1.0


def test_d0_trains_one_model_per_language(pipeline):
    corpus, vocab, traces, student_config = pipeline
    result = run_strategy("D0", corpus, None, vocab, student_config, seed=0, settings=FAST)
    assert set(result.per_language) == {"lang0", "lang1"}
    assert result.model is None
    a = result.per_language["lang0"].state_bytes()
    b = result.per_language["lang1"].state_bytes()
    assert a != b
    report = result.evaluate(corpus.test, vocab, MAX_LEN)
    assert set(report.per_language) == {"lang0", "lang1"}


def test_strategy_determinism_bitwise(pipeline):
    corpus, vocab, traces, student_config = pipeline
    r1 = run_strategy("D42", corpus, traces, vocab, student_config, seed=7, settings=FAST)
    r2 = run_strategy("D42", corpus, traces, vocab, student_config, seed=7, settings=FAST)
    assert r1.model.state_bytes() == r2.model.state_bytes()
    assert r1.history.records == r2.history.records


def test_d2_with_zero_beta_matches_d1(pipeline):
    corpus, vocab, traces, student_config = pipeline
    w = LossWeights(alpha=1.0, beta=0.0, gamma=1.0)
    d1 = run_strategy(
        strategy_spec("D1", weights=w), corpus, traces, vocab, student_config, seed=3,
        settings=FAST,
    )
    d2 = run_strategy(
        strategy_spec("D2", weights=w), corpus, traces, vocab, student_config, seed=3,
        settings=FAST,
    )
    assert d1.model.state_bytes() == d2.model.state_bytes()


def test_history_file_round_trip(pipeline, tmp_path):
    corpus, vocab, traces, student_config = pipeline
    result = run_strategy("D41", corpus, traces, vocab, student_config, seed=2, settings=FAST)
    path = tmp_path / "history.tsv"
    result.history.metadata["config_hash"] = "abc123"
    result.history.save(path)
    loaded = TrainHistory.load(path)
    assert loaded.records == result.history.records
    assert loaded.metadata["config_hash"] == "abc123"
    assert loaded.metadata["strategy"] == "D41"


def test_early_stopping_bookkeeping():
    """Improvement only at epoch 1, patience 3: stops after epoch 4, keeps epoch-1 best."""
    vals = iter([10.0, 5.0, 6.0, 6.5, 7.0, 8.0, 9.0, 9.5, 9.9, 10.0, 10.1])
    best = math.inf
    bad = 0
    epochs_run = 0
    entry = next(vals)
    best = entry
    for epoch in range(1, 11):
        val = next(vals)
        epochs_run = epoch
        if val < best:
            best = val
            bad = 0
        else:
            bad += 1
            if bad >= 3:
                break
    assert epochs_run == 4
    assert best == 5.0


def test_warm_start_copies_logit_head(pipeline):
    corpus, vocab, traces, student_config = pipeline
    settings = TrainSettings(batch_size=32, epochs_per_layer=0, patience=1)
    # with zero epochs per layer nothing trains, so after D41 the softmax head
    # must equal the (untrained) logit head via the stage-3 warm start
    result = run_strategy("D41", corpus, traces, vocab, student_config, seed=5, settings=settings)
    model = result.model
    np.testing.assert_array_equal(model.softmax_w.data, model.logit_w.data)
    np.testing.assert_array_equal(model.softmax_b.data, model.logit_b.data)
