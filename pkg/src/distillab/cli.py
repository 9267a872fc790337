"""Command-line pipeline: synth-data, build-vocab, train-teacher, trace,
distil, evaluate, bench, and sweep.

Every command reads a config file (defaults apply when omitted), accepts
``--set section.key=value`` overrides, and reads/writes its declared
artifacts under the artifact root (``--root``, else $DISTILLAB_ROOT,
else run.out_dir from the config). Exit codes: 0 success, 1 usage or
config error, 2 missing upstream artifact, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import compression_report, measure_latency
from .config import ExperimentConfig
from .data import Corpus, generate_synthetic, parse_conll, subsample_labeled, write_conll
from .distil import TrainSettings, run_strategy, strategy_spec
from .errors import ConfigurationError, DataError, DependencyError, DistillabError
from .evaluation import EvalReport
from .inference import evaluate_tagger
from .losses import LossWeights
from .models import (
    StudentConfig,
    TeacherConfig,
    count_params,
    init_embeddings,
    load_checkpoint,
    save_checkpoint,
    StudentModel,
    TeacherModel,
)
from .teacher import default_trace_layer, finetune_teacher, read_trace, trace_transfer_set
from .tokenizer import WordPieceVocab, build_vocab as build_wordpiece_vocab

ENV_ROOT = "DISTILLAB_ROOT"

COMMANDS = (
    "synth-data",
    "build-vocab",
    "train-teacher",
    "trace",
    "distil",
    "evaluate",
    "bench",
    "sweep",
)


# -- path scheme -----------------------------------------------------------------


def artifact_root(config: ExperimentConfig, override: str | None) -> Path:
    root = override or os.environ.get(ENV_ROOT) or config.get("run", "out_dir")
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def data_dir(config: ExperimentConfig, root: Path) -> Path:
    raw = Path(config.get("data", "dir"))
    return raw if raw.is_absolute() else root / raw


def vocab_path(root: Path) -> Path:
    return root / "vocab.txt"


def teacher_path(root: Path) -> Path:
    return root / "teacher.ckpt"


def trace_path(root: Path) -> Path:
    return root / "transfer.trace"


def student_path(root: Path, strategy_id: str, seed: int, lang: str | None = None) -> Path:
    suffix = f"_{lang}" if lang else ""
    return root / f"student_{strategy_id}_seed{seed}{suffix}.ckpt"


def history_path(root: Path, strategy_id: str, seed: int, lang: str | None = None) -> Path:
    suffix = f"_{lang}" if lang else ""
    return root / f"history_{strategy_id}_seed{seed}{suffix}.tsv"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing artifact {path}; run `distillab {producer}` first")
    return path


# -- artifact loading ---------------------------------------------------------------


def load_corpus(config: ExperimentConfig, root: Path) -> Corpus:
    base = data_dir(config, root)
    _require(base / "unlabeled.txt", "synth-data")
    corpus = Corpus()
    for split in ("train", "dev", "test"):
        split_dir = _require(base / split, "synth-data")
        for path in sorted(split_dir.glob("*.conll")):
            lang = path.stem
            sentences = parse_conll(path, lang)
            if split == "train":
                corpus.labeled.extend(sentences)
            elif split == "dev":
                corpus.dev[lang] = sentences
            else:
                corpus.test[lang] = sentences
    with open(base / "unlabeled.txt", encoding="utf-8") as fh:
        for line in fh:
            words = tuple(line.split())
            if words:
                corpus.unlabeled.append(words)
    k = config.get("data", "subsample_per_lang")
    if k:
        corpus = subsample_labeled(corpus, k, seed=config.get("data", "subsample_seed"))
    return corpus


def load_vocab(root: Path) -> WordPieceVocab:
    return WordPieceVocab.load(_require(vocab_path(root), "build-vocab"))


def _teacher_config(config: ExperimentConfig, vocab_size: int) -> TeacherConfig:
    return TeacherConfig(
        vocab_size=vocab_size,
        width=config.get("teacher", "width"),
        layers=config.get("teacher", "layers"),
        n_heads=config.get("teacher", "heads"),
        max_len=config.get("tokenizer", "max_len"),
        dropout=config.get("teacher", "dropout"),
    )


def _student_config(config: ExperimentConfig, vocab_size: int) -> StudentConfig:
    return StudentConfig(
        vocab_size=vocab_size,
        emb_dim=config.get("student", "emb_dim"),
        hidden=config.get("student", "hidden"),
        teacher_dim=config.get("teacher", "width"),
        arch=config.get("student", "arch"),
        depth=config.get("student", "depth"),
        n_heads=config.get("student", "heads"),
        head_input=config.get("student", "head_input"),
        max_len=config.get("tokenizer", "max_len"),
        dropout=config.get("student", "dropout"),
    )


def _train_settings(config: ExperimentConfig) -> TrainSettings:
    return TrainSettings(
        batch_size=config.get("schedule", "batch_size"),
        labeled_batch_size=config.get("schedule", "labeled_batch_size"),
        lr_high=config.get("schedule", "lr_high"),
        lr_low=config.get("schedule", "lr_low"),
        epochs_per_layer=config.get("schedule", "epochs_per_layer"),
        patience=config.get("schedule", "patience"),
        min_delta=config.get("schedule", "min_delta"),
        kld_direction=config.get("strategy", "kld_direction"),
    )


def _loss_weights(config: ExperimentConfig) -> LossWeights:
    return LossWeights(
        alpha=config.get("strategy", "alpha"),
        beta=config.get("strategy", "beta"),
        gamma=config.get("strategy", "gamma"),
    )


def _corpus_word_freqs(corpus: Corpus) -> dict[str, int]:
    freqs: dict[str, int] = {}
    for sent in corpus.labeled + corpus.dev_sentences() + corpus.test_sentences():
        for word in sent.words:
            freqs[word] = freqs.get(word, 0) + 1
    for words in corpus.unlabeled:
        for word in words:
            freqs[word] = freqs.get(word, 0) + 1
    return freqs


def _student_embeddings(config, root, vocab, student_config):
    source = config.get("student", "embedding_init")
    if source == "random":
        return None
    if source == "svd":
        teacher, _ = load_checkpoint(_require(teacher_path(root), "train-teacher"))
        return init_embeddings(
            "svd",
            student_config.vocab_size,
            student_config.emb_dim,
            matrix=teacher.piece_emb.data,
        )
    if source == "file":
        path = config.get("student", "embedding_file")
        if not path:
            raise ConfigurationError("student.embedding_init=file needs student.embedding_file")
        return init_embeddings(
            "file",
            student_config.vocab_size,
            student_config.emb_dim,
            seed=config.get("run", "seed"),
            path=path,
            vocab=vocab,
        )
    raise ConfigurationError(f"unknown student.embedding_init {source!r}")


# -- commands ------------------------------------------------------------------------


def cmd_synth_data(config: ExperimentConfig, root: Path, args) -> int:
    corpus = generate_synthetic(
        config.get("data", "num_langs"),
        config.get("data", "labeled_per_lang"),
        config.get("data", "unlabeled_total"),
        seed=config.get("data", "seed"),
        dev_per_lang=config.get("data", "dev_per_lang"),
        test_per_lang=config.get("data", "test_per_lang"),
    )
    base = data_dir(config, root)
    by_lang = corpus.labeled_by_language()
    for split, per_lang in (("train", by_lang), ("dev", corpus.dev), ("test", corpus.test)):
        split_dir = base / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for lang, sentences in sorted(per_lang.items()):
            write_conll(split_dir / f"{lang}.conll", sentences)
    with open(base / "unlabeled.txt", "w", encoding="utf-8") as fh:
        for words in corpus.unlabeled:
            fh.write(" ".join(words) + "\n")
    print(
        f"wrote {len(corpus.labeled)} labeled / {len(corpus.unlabeled)} unlabeled "
        f"sentences for {len(by_lang)} languages to {base}"
    )
    return 0


def cmd_build_vocab(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = build_wordpiece_vocab(_corpus_word_freqs(corpus), config.get("vocab", "size"))
    vocab.save(vocab_path(root))
    print(f"wrote {len(vocab)} pieces to {vocab_path(root)}")
    return 0


def cmd_train_teacher(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = load_vocab(root)
    teacher_config = _teacher_config(config, len(vocab))
    teacher, history = finetune_teacher(
        corpus,
        vocab,
        teacher_config,
        epochs=config.get("teacher", "epochs"),
        seed=config.get("teacher", "seed"),
        batch_size=config.get("teacher", "batch_size"),
        lr_high=config.get("teacher", "lr_high"),
        lr_low=config.get("schedule", "lr_low"),
    )
    save_checkpoint(teacher, teacher_path(root), meta={"config_hash": config.hash()})
    with open(root / "teacher_history.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write("epoch\ttrain_loss\tdev_loss\n")
        for record in history:
            fh.write(f"{record['epoch']}\t{record['train_loss']!r}\t{record['dev_loss']!r}\n")
    report = evaluate_tagger(teacher, corpus.dev, vocab, teacher_config.max_len)
    print(f"teacher dev span-F1: mean={report.mean_f1:.4f} std={report.std_f1:.4f}")
    return 0


def cmd_trace(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = load_vocab(root)
    teacher, _ = load_checkpoint(_require(teacher_path(root), "train-teacher"))
    layer = config.get("teacher", "trace_layer") or default_trace_layer(teacher.config.layers)
    trace_transfer_set(teacher, corpus.unlabeled, vocab, layer, trace_path(root))
    with open(trace_path(root).with_suffix(".trace.meta"), "w", encoding="utf-8") as fh:
        fh.write(f"config_hash={config.hash()}\nlayer={layer}\nrecords={len(corpus.unlabeled)}\n")
    print(f"traced {len(corpus.unlabeled)} sentences at layer {layer} -> {trace_path(root)}")
    return 0


def _run_one_strategy(config, root, corpus, vocab, strategy_id, seed):
    spec = strategy_spec(strategy_id, weights=_loss_weights(config))
    traces = None
    if any(s.needs_traces for s in spec.stages):
        traces = read_trace(_require(trace_path(root), "trace"))
    student_config = _student_config(config, len(vocab))
    embeddings = _student_embeddings(config, root, vocab, student_config)
    settings = _train_settings(config)
    return spec, run_strategy(
        spec, corpus, traces, vocab, student_config, seed, settings, embeddings=embeddings
    )


def cmd_distil(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = load_vocab(root)
    seed = config.get("run", "seed")
    strategy_id = strategy_spec(config.get("strategy", "id")).id
    spec, result = _run_one_strategy(config, root, corpus, vocab, strategy_id, seed)
    if result.per_language is not None:
        for lang, model in sorted(result.per_language.items()):
            save_checkpoint(
                model,
                student_path(root, spec.id, seed, lang),
                meta={"config_hash": config.hash(), "strategy": spec.id, "seed": seed},
            )
            history = result.per_language_history[lang]
            history.metadata["config_hash"] = config.hash()
            history.save(history_path(root, spec.id, seed, lang))
    else:
        save_checkpoint(
            result.model,
            student_path(root, spec.id, seed),
            meta={"config_hash": config.hash(), "strategy": spec.id, "seed": seed},
        )
        result.history.metadata["config_hash"] = config.hash()
        result.history.save(history_path(root, spec.id, seed))
    max_len = config.get("tokenizer", "max_len")
    report = result.evaluate(corpus.test, vocab, max_len)
    print(f"{spec.id} seed {seed}: test span-F1 mean={report.mean_f1:.4f} std={report.std_f1:.4f}")
    return 0


def cmd_evaluate(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = load_vocab(root)
    seed = config.get("run", "seed")
    strategy_id = strategy_spec(config.get("strategy", "id")).id
    max_len = config.get("tokenizer", "max_len")
    shared = student_path(root, strategy_id, seed)
    if shared.exists():
        model, _ = load_checkpoint(shared)
        report = evaluate_tagger(model, corpus.test, vocab, max_len)
    else:
        per_language = {}
        for lang in corpus.test:
            path = student_path(root, strategy_id, seed, lang)
            if not path.exists():
                raise DependencyError(
                    f"missing checkpoint {shared} (or per-language {path}); "
                    f"run `distillab distil` first"
                )
            per_language[lang], _ = load_checkpoint(path)
        report = evaluate_tagger(
            None, corpus.test, vocab, max_len, model_per_language=per_language
        )
    stem = root / f"report_{strategy_id}_seed{seed}"
    with open(stem.with_suffix(".txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write(report.table() + "\n")
    with open(stem.with_suffix(".tsv"), "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write(report.records())
    print(report.table())
    return 0


def cmd_bench(config: ExperimentConfig, root: Path, args) -> int:
    seq_len = config.get("bench", "seq_len")
    vocab_size = config.get("vocab", "size")
    teacher_cfg = replace(_teacher_config(config, vocab_size), max_len=seq_len)
    student_cfg = replace(_student_config(config, vocab_size), max_len=seq_len)
    teacher = TeacherModel(teacher_cfg, seed=0)
    student = StudentModel(student_cfg, seed=0)
    report = compression_report(
        teacher,
        student,
        batch_size=config.get("bench", "batch_size"),
        query_count=config.get("bench", "queries"),
        runs=config.get("bench", "runs"),
        online=config.get("bench", "online"),
        seq_len=seq_len,
    )
    print(report.table())
    with open(root / "bench_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write(report.table() + "\n")
    with open(root / "bench_report.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write(report.records())

    sweep = config.get("bench", "hidden_sweep")
    if sweep:
        rows = []
        for hidden in sweep:
            cfg = replace(student_cfg, hidden=hidden)
            model = StudentModel(cfg, seed=0)
            stats = measure_latency(
                model,
                config.get("bench", "batch_size"),
                query_count=min(256, config.get("bench", "queries")),
                runs=max(5, config.get("bench", "runs") // 4),
                seq_len=seq_len,
            )
            rows.append((hidden, count_params(model), stats.median, stats.mean))
        with open(root / "bench_sweep.tsv", "w", encoding="utf-8") as fh:
            fh.write(f"# config_hash={config.hash()}\n")
            fh.write("hidden\tparams\tmedian_s\tmean_s\n")
            for hidden, params, median, mean in rows:
                fh.write(f"{hidden}\t{params}\t{median:.6f}\t{mean:.6f}\n")
        for hidden, params, median, _ in rows:
            print(f"hidden={hidden:<5d} params={params:<10d} median={median:.6f}s")
    return 0


def cmd_sweep(config: ExperimentConfig, root: Path, args) -> int:
    corpus = load_corpus(config, root)
    vocab = load_vocab(root)
    strategies = [strategy_spec(s).id for s in config.get("sweep", "strategies")]
    seeds = config.get("sweep", "seeds")
    transfer_sizes = config.get("sweep", "transfer_sizes") or (len(corpus.unlabeled),)
    max_len = config.get("tokenizer", "max_len")
    student_config = _student_config(config, len(vocab))
    settings = _train_settings(config)
    weights = _loss_weights(config)

    full_traces = None
    results: dict[tuple[str, int], list[float]] = {}
    for strategy_id in strategies:
        spec = strategy_spec(strategy_id, weights=weights)
        needs_traces = any(s.needs_traces for s in spec.stages)
        if needs_traces and full_traces is None:
            full_traces = read_trace(_require(trace_path(root), "trace"))
        for size in transfer_sizes:
            if needs_traces and size > full_traces.num_records:
                raise ConfigurationError(
                    f"transfer size {size} exceeds traced records {full_traces.num_records}"
                )
            traces = full_traces.subset(range(size)) if needs_traces else None
            scores = []
            for seed in seeds:
                result = run_strategy(
                    spec, corpus, traces, vocab, student_config, seed, settings
                )
                history_file = history_path(root, f"{spec.id}_t{size}", seed)
                if result.history is not None:
                    result.history.metadata["config_hash"] = config.hash()
                    result.history.metadata["transfer_size"] = size
                    result.history.save(history_file)
                else:
                    for lang, history in result.per_language_history.items():
                        history.metadata["config_hash"] = config.hash()
                        history.save(history_path(root, f"{spec.id}_t{size}", seed, lang))
                report = result.evaluate(corpus.test, vocab, max_len)
                scores.append(report.mean_f1)
                print(
                    f"{spec.id} transfer={size} seed={seed}: "
                    f"test F1 mean={report.mean_f1:.4f}"
                )
            results[(spec.id, size)] = scores

    lines = [f"{'strategy':<10}" + "".join(f"{f'T={s}':>18}" for s in transfer_sizes)]
    for strategy_id in strategies:
        row = f"{strategy_id:<10}"
        for size in transfer_sizes:
            scores = results[(strategy_id, size)]
            row += f"{np.mean(scores) * 100:>10.2f} ({np.std(scores) * 100:.2f})"
        lines.append(row)
    table = "\n".join(lines)
    with open(root / "sweep_summary.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write(table + "\n")
    with open(root / "sweep_summary.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config.hash()}\n")
        fh.write("strategy\ttransfer\tmean_f1\tstd_f1\tseeds\n")
        for (strategy_id, size), scores in results.items():
            fh.write(
                f"{strategy_id}\t{size}\t{np.mean(scores):.6f}\t{np.std(scores):.6f}\t"
                f"{','.join(str(s) for s in seeds)}\n"
            )
    print(table)
    return 0


_HANDLERS = {
    "synth-data": cmd_synth_data,
    "build-vocab": cmd_build_vocab,
    "train-teacher": cmd_train_teacher,
    "trace": cmd_trace,
    "distil": cmd_distil,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distillab",
        description="Distil a transformer tagger into a compact BiLSTM student.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", help="experiment config file (key=value sections)")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable)",
    )
    parser.add_argument("--root", help=f"artifact root directory (default ${ENV_ROOT} or config)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        for override in args.set:
            if "=" not in override or "." not in override.split("=", 1)[0]:
                raise ConfigurationError(
                    f"--set expects SECTION.KEY=VALUE, got {override!r}"
                )
            dotted, _, value = override.partition("=")
            section, _, key = dotted.partition(".")
            config.set(section.strip(), key.strip(), value.strip())
        root = artifact_root(config, args.root)
        return _HANDLERS[args.command](config, root, args)
    except (ConfigurationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DistillabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
