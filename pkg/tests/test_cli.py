"""End-to-end command pipeline on a miniature configuration."""
import numpy as np
import pytest

from distillab.cli import main
from distillab.distil import TrainHistory
from distillab.models import load_checkpoint
from distillab.teacher import read_trace

TINY = [
    "--set", "data.num_langs=2",
    "--set", "data.labeled_per_lang=12",
    "--set", "data.dev_per_lang=6",
    "--set", "data.test_per_lang=6",
    "--set", "data.unlabeled_total=40",
    "--set", "vocab.size=400",
    "--set", "tokenizer.max_len=20",
    "--set", "teacher.width=8",
    "--set", "teacher.layers=2",
    "--set", "teacher.heads=2",
    "--set", "teacher.epochs=1",
    "--set", "student.emb_dim=6",
    "--set", "student.hidden=4",
    "--set", "schedule.epochs_per_layer=1",
    "--set", "schedule.patience=1",
    "--set", "schedule.batch_size=16",
]


def run(root, *argv):
    return main([*argv, "--root", str(root), *TINY])


@pytest.fixture(scope="module")
def pipeline_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(root, "synth-data") == 0
    assert run(root, "build-vocab") == 0
    assert run(root, "train-teacher") == 0
    assert run(root, "trace") == 0
    return root


def test_synth_data_writes_conll_layout(pipeline_root):
    base = pipeline_root / "data"
    assert (base / "train" / "lang0.conll").exists()
    assert (base / "dev" / "lang1.conll").exists()
    assert (base / "unlabeled.txt").exists()
    lines = (base / "unlabeled.txt").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 40


def test_vocab_artifact(pipeline_root):
    lines = (pipeline_root / "vocab.txt").read_text(encoding="utf-8").splitlines()
    assert lines[:4] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
    assert len(lines) <= 400


def test_trace_artifact_readable(pipeline_root):
    traces = read_trace(pipeline_root / "transfer.trace")
    assert traces.num_records == 40
    meta = (pipeline_root / "transfer.trace.meta").read_text(encoding="utf-8")
    assert "config_hash=" in meta and "layer=1" in meta


def test_distil_d42_happy_path(pipeline_root):
    assert run(pipeline_root, "distil", "--set", "strategy.id=D42") == 0
    ckpt = pipeline_root / "student_D42_seed0.ckpt"
    assert ckpt.exists()
    model, meta = load_checkpoint(ckpt)
    assert meta["strategy"] == "D42"
    history = TrainHistory.load(pipeline_root / "history_D42_seed0.tsv")
    assert {r.stage for r in history.records} == {1, 2, 3}
    assert "config_hash" in history.metadata


def test_distil_d0_writes_per_language(pipeline_root):
    assert run(pipeline_root, "distil", "--set", "strategy.id=D0") == 0
    assert (pipeline_root / "student_D0_seed0_lang0.ckpt").exists()
    assert (pipeline_root / "student_D0_seed0_lang1.ckpt").exists()


def test_evaluate_writes_report(pipeline_root):
    assert run(pipeline_root, "evaluate", "--set", "strategy.id=D42") == 0
    report = (pipeline_root / "report_D42_seed0.txt").read_text(encoding="utf-8")
    assert "mean F1" in report
    records = (pipeline_root / "report_D42_seed0.tsv").read_text(encoding="utf-8")
    assert records.count("lang") >= 2


def test_missing_trace_is_dependency_error(tmp_path):
    root = tmp_path / "fresh"
    assert run(root, "synth-data") == 0
    assert run(root, "build-vocab") == 0
    code = run(root, "distil", "--set", "strategy.id=D1")
    assert code == 2  # dependency error names the trace step


def test_distil_before_synth_is_dependency_error(tmp_path):
    code = run(tmp_path / "none", "distil")
    assert code == 2


def test_bad_config_value_is_usage_error(tmp_path):
    code = main(["synth-data", "--root", str(tmp_path), "--set", "data.num_langs=potato"])
    assert code == 1


def test_unknown_key_is_usage_error(tmp_path):
    code = main(["synth-data", "--root", str(tmp_path), "--set", "data.bogus=1"])
    assert code == 1


def test_bench_writes_reports(tmp_path):
    root = tmp_path / "bench"
    code = main([
        "bench", "--root", str(root),
        "--set", "vocab.size=80",
        "--set", "teacher.width=8",
        "--set", "teacher.layers=1",
        "--set", "teacher.heads=2",
        "--set", "student.emb_dim=4",
        "--set", "student.hidden=3",
        "--set", "bench.queries=16",
        "--set", "bench.runs=2",
        "--set", "bench.batch_size=8",
        "--set", "bench.hidden_sweep=3,6",
    ])
    assert code == 0
    assert (root / "bench_report.txt").exists()
    sweep = (root / "bench_sweep.tsv").read_text(encoding="utf-8").splitlines()
    assert sweep[1] == "hidden\tparams\tmedian_s\tmean_s"
    assert len(sweep) == 4


def test_sweep_emits_summary(pipeline_root):
    code = run(
        pipeline_root, "sweep",
        "--set", "sweep.strategies=D0S,D1",
        "--set", "sweep.seeds=0,1",
        "--set", "sweep.transfer_sizes=20,40",
    )
    assert code == 0
    summary = (pipeline_root / "sweep_summary.tsv").read_text(encoding="utf-8").splitlines()
    # header comment + column header + 2 strategies x 2 sizes
    assert len(summary) == 6
    # 2 strategies x 2 sizes x 2 seeds history files
    histories = list(pipeline_root.glob("history_D0S_t*_seed*.tsv"))
    histories += list(pipeline_root.glob("history_D1_t*_seed*.tsv"))
    assert len(histories) == 8


def test_artifact_determinism(tmp_path):
    root_a = tmp_path / "a"
    root_b = tmp_path / "b"
    for root in (root_a, root_b):
        assert run(root, "synth-data") == 0
        assert run(root, "build-vocab") == 0
        assert run(root, "train-teacher") == 0
        assert run(root, "trace") == 0
        assert run(root, "distil", "--set", "strategy.id=D41") == 0
    for name in (
        "vocab.txt",
        "teacher.ckpt",
        "transfer.trace",
        "student_D41_seed0.ckpt",
        "history_D41_seed0.tsv",
    ):
        assert (root_a / name).read_bytes() == (root_b / name).read_bytes(), name
