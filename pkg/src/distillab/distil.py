"""The distillation strategy engine.

Eight strategies ordered from weakest to strongest baseline: per-language
supervised models (D0), one shared supervised model (D0S), joint training
with teacher logits (D1) and additionally representations (D2), then the
staged schedules: representation stage followed by a joint labels+logits
stage (D31/D32) or by separate logit and label stages (D41/D42), where
the 2-suffix variants gradually unfreeze one parameter group at a time
from the top of the network down, restoring the best checkpoint by
validation loss after every layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Batch, Corpus, batch_iter
from .errors import ConfigurationError, TrainingError
from .inference import encode_labeled, evaluate_tagger
from .losses import JointBatch, LossWeights, joint_loss, make_onehot
from .models import StudentConfig, StudentModel
from .nn import AdamState, CosineSchedule, adam_step, cosine_lr, no_grad
from .teacher import TraceSet
from .tokenizer import TagSet, WordPieceVocab

__all__ = [
    "StageSpec",
    "StrategySpec",
    "StageState",
    "TrainHistory",
    "HistoryRecord",
    "TrainSettings",
    "StrategyResult",
    "STRATEGY_IDS",
    "strategy_spec",
    "run_strategy",
    "unfreeze_layer",
]

# top-to-bottom unfreeze orders; the joint CE+LL stage opens both heads first
_UNFREEZE_ORDERS = {
    frozenset({"LL"}): (("logit_head",), ("projection",), ("trunk",), ("word_emb",)),
    frozenset({"CE"}): (("softmax_head",), ("projection",), ("trunk",), ("word_emb",)),
    frozenset({"CE", "LL"}): (
        ("softmax_head", "logit_head"),
        ("projection",),
        ("trunk",),
        ("word_emb",),
    ),
}

_RELEVANT_ROLES = {
    "CE": ("softmax_head", "projection", "trunk", "word_emb"),
    "LL": ("logit_head", "projection", "trunk", "word_emb"),
    "RL": ("projection", "trunk", "word_emb"),
}


@dataclass(frozen=True)
class StageSpec:
    losses: frozenset
    unfreeze: bool = False

    def __post_init__(self):
        bad = set(self.losses) - {"CE", "LL", "RL"}
        if bad:
            raise ConfigurationError(f"unknown stage losses {sorted(bad)}")
        if self.unfreeze and frozenset(self.losses) not in _UNFREEZE_ORDERS:
            raise ConfigurationError(
                f"no unfreeze order defined for stage losses {sorted(self.losses)}"
            )

    @property
    def needs_labeled(self) -> bool:
        return "CE" in self.losses

    @property
    def needs_traces(self) -> bool:
        return bool({"LL", "RL"} & self.losses)

    @property
    def mode(self) -> str:
        if self.needs_labeled and self.needs_traces:
            return "mixed"
        return "labeled" if self.needs_labeled else "unlabeled"

    def relevant_roles(self, head_input: str) -> tuple[str, ...]:
        roles: list[str] = []
        for loss in ("CE", "LL", "RL"):
            if loss in self.losses:
                for role in _RELEVANT_ROLES[loss]:
                    if role not in roles:
                        roles.append(role)
        if head_input == "hidden":
            roles = [r for r in roles if r != "projection"]
        return tuple(roles)

    def unfreeze_order(self) -> tuple[tuple[str, ...], ...]:
        return _UNFREEZE_ORDERS[frozenset(self.losses)]


@dataclass(frozen=True)
class StrategySpec:
    """Declarative description of one distillation strategy."""

    id: str
    stages: tuple[StageSpec, ...]
    head_input: str = "projected"
    per_language: bool = False
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if not self.stages:
            raise ConfigurationError("a strategy needs at least one stage")
        if self.head_input == "hidden" and any(s.needs_traces for s in self.stages):
            raise ConfigurationError("hidden-head strategies cannot use trace losses")


def _make_strategies() -> dict[str, StrategySpec]:
    ce = StageSpec(frozenset({"CE"}))
    ce_ll = StageSpec(frozenset({"CE", "LL"}))
    ce_ll_rl = StageSpec(frozenset({"CE", "LL", "RL"}))
    rl = StageSpec(frozenset({"RL"}))
    ll = StageSpec(frozenset({"LL"}))
    return {
        "D0": StrategySpec(id="D0", stages=(ce,), head_input="hidden", per_language=True),
        "D0S": StrategySpec(id="D0S", stages=(ce,), head_input="hidden"),
        "D1": StrategySpec(id="D1", stages=(ce_ll,)),
        "D2": StrategySpec(id="D2", stages=(ce_ll_rl,)),
        "D31": StrategySpec(id="D31", stages=(rl, ce_ll)),
        "D32": StrategySpec(id="D32", stages=(rl, replace(ce_ll, unfreeze=True))),
        "D41": StrategySpec(id="D41", stages=(rl, ll, ce)),
        "D42": StrategySpec(
            id="D42", stages=(rl, replace(ll, unfreeze=True), replace(ce, unfreeze=True))
        ),
    }


_STRATEGIES = _make_strategies()
STRATEGY_IDS = tuple(_STRATEGIES)


def strategy_spec(strategy_id: str, weights: LossWeights | None = None) -> StrategySpec:
    key = strategy_id.replace(".", "").upper()
    if key not in _STRATEGIES:
        raise ConfigurationError(
            f"unknown strategy {strategy_id!r}; expected one of {', '.join(STRATEGY_IDS)}"
        )
    spec = _STRATEGIES[key]
    if weights is not None:
        spec = replace(spec, weights=weights)
    return spec


@dataclass(frozen=True)
class TrainSettings:
    """Optimization knobs shared by every stage.

    The labeled segment is typically a few hundred sentences against a
    transfer set of tens of thousands, so it gets its own batch size;
    min_delta is the improvement threshold for early stopping.
    """

    batch_size: int = 256
    labeled_batch_size: int = 16
    lr_high: float = 3e-3
    lr_low: float = 1e-8
    epochs_per_layer: int = 10
    patience: int = 3
    min_delta: float = 0.0
    kld_direction: str = "forward"
    trace_val_fraction: float = 0.05


@dataclass
class HistoryRecord:
    stage: int
    layer: str
    epoch: int
    train_loss: float
    val_loss: float
    dev_f1: float

    def __post_init__(self):
        self.train_loss = float(self.train_loss)
        self.val_loss = float(self.val_loss)
        self.dev_f1 = float(self.dev_f1)


@dataclass
class TrainHistory:
    records: list[HistoryRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, **kwargs) -> None:
        self.records.append(HistoryRecord(**kwargs))

    def stage_layers(self, stage: int) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            if r.stage == stage:
                seen.setdefault(r.layer, None)
        return list(seen)

    def best_val_by_layer(self, stage: int) -> list[float]:
        out = []
        for layer in self.stage_layers(stage):
            vals = [r.val_loss for r in self.records if r.stage == stage and r.layer == layer]
            out.append(min(vals))
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.metadata):
                fh.write(f"# {key}={self.metadata[key]}\n")
            fh.write("stage\tlayer\tepoch\ttrain_loss\tval_loss\tdev_f1\n")
            for r in self.records:
                fh.write(
                    f"{r.stage}\t{r.layer}\t{r.epoch}\t{r.train_loss!r}\t{r.val_loss!r}\t{r.dev_f1!r}\n"
                )

    @classmethod
    def load(cls, path) -> "TrainHistory":
        history = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    history.metadata[key] = value
                    continue
                if not line or line.startswith("stage\t"):
                    continue
                stage, layer, epoch, train_loss, val_loss, dev_f1 = line.split("\t")
                history.append(
                    stage=int(stage),
                    layer=layer,
                    epoch=int(epoch),
                    train_loss=float(train_loss),
                    val_loss=float(val_loss),
                    dev_f1=float(dev_f1),
                )
        return history


@dataclass
class StageState:
    """Bookkeeping for one stage: what is unfrozen and what was best so far."""

    stage_index: int
    expected_steps: tuple[tuple[str, ...], ...]
    next_step: int = 0
    pending: tuple[str, ...] = ()
    unfrozen: list[str] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_snapshot: list | None = None
    epochs_done: int = 0


def unfreeze_layer(model: StudentModel, state: StageState, role: str) -> StageState:
    """Unfreeze one parameter group, enforcing the top-to-bottom order."""
    if role in state.unfrozen:
        raise ConfigurationError(f"group {role!r} is already unfrozen")
    if not state.pending:
        if state.next_step >= len(state.expected_steps):
            raise ConfigurationError("no unfreeze steps left in this stage")
        state.pending = state.expected_steps[state.next_step]
        state.next_step += 1
    if role not in state.pending:
        raise ConfigurationError(
            f"out-of-order unfreeze: expected one of {state.pending}, got {role!r}"
        )
    model.group_for_role(role).set_frozen(False)
    state.unfrozen.append(role)
    state.pending = tuple(r for r in state.pending if r != role)
    return state


class _StrategyRunner:
    def __init__(
        self,
        spec: StrategySpec,
        corpus: Corpus,
        traces: TraceSet | None,
        student_config: StudentConfig,
        seed: int,
        settings: TrainSettings,
        embeddings: np.ndarray | None = None,
    ):
        self.embeddings = embeddings
        needs_traces = any(s.needs_traces for s in spec.stages)
        if needs_traces and traces is None:
            raise ConfigurationError(
                f"strategy {spec.id} needs teacher traces but none were provided"
            )
        if needs_traces and traces.width != student_config.teacher_dim:
            raise ConfigurationError(
                f"trace width {traces.width} does not match student teacher_dim "
                f"{student_config.teacher_dim}"
            )
        if spec.head_input != student_config.head_input:
            student_config = replace(student_config, head_input=spec.head_input)
        self.spec = spec
        self.corpus = corpus
        self.settings = settings
        self.seed = int(seed)
        self.config = student_config
        self.tagset = TagSet()
        self.vocab_pad = 0

        if needs_traces:
            n = traces.num_records
            n_val = max(1, int(n * settings.trace_val_fraction)) if n > 1 else 0
            self.trace_train = traces.subset(range(n - n_val))
            self.trace_val = traces.subset(range(n - n_val, n)) if n_val else traces
        else:
            self.trace_train = None
            self.trace_val = None

    # -- loss plumbing --------------------------------------------------------

    def _labeled_arrays(self, vocab: WordPieceVocab, sentences):
        ids, tag_ids, mask, _ = encode_labeled(sentences, vocab, self.tagset, self.config.max_len)
        return ids, make_onehot(tag_ids, self.config.n_tags), mask

    def _stage_batch(self, model, stage, batch: Batch, train: bool, rng):
        """Run the student on one batch and build the joint loss inputs."""
        parts = {}
        if stage.needs_labeled:
            sel = np.array([s.index for s in batch.labeled])
            out = model.forward(self.lab_ids[sel], train=train, rng=rng)
            parts["probs"] = out.probs
            parts["onehot"] = self.lab_onehot[sel]
            parts["labeled_mask"] = self.lab_mask[sel]
        if stage.needs_traces:
            ids, mask, logits, reps = self.trace_train.batch(
                batch.unlabeled_indices, self.config.max_len, self.vocab_pad
            )
            out = model.forward(ids, train=train, rng=rng)
            if "LL" in stage.losses:
                parts["scores"] = out.scores
                parts["teacher_logits"] = logits
            if "RL" in stage.losses:
                parts["proj"] = out.proj
                parts["teacher_reps"] = reps
            parts["unlabeled_mask"] = mask
        return joint_loss(
            JointBatch(**parts),
            self.spec.weights,
            stage.losses,
            kld_direction=self.settings.kld_direction,
        )

    def _validation_loss(self, model, stage) -> float:
        """Stage objective on held-out data, exact token means."""
        total = 0.0
        with no_grad():
            if stage.needs_labeled:
                n_tok = 0.0
                acc = 0.0
                for lo in range(0, len(self.dev_ids), 512):
                    sel = slice(lo, lo + 512)
                    out = model.forward(self.dev_ids[sel], train=False)
                    chunk_mask = self.dev_mask[sel]
                    loss = joint_loss(
                        JointBatch(
                            probs=out.probs,
                            onehot=self.dev_onehot[sel],
                            labeled_mask=chunk_mask,
                        ),
                        self.spec.weights,
                        {"CE"},
                    )
                    acc += loss.item() * chunk_mask.sum()
                    n_tok += chunk_mask.sum()
                total += acc / max(n_tok, 1.0)
            if stage.needs_traces:
                n_tok = 0.0
                acc = 0.0
                n = self.trace_val.num_records
                for lo in range(0, n, 512):
                    sel = range(lo, min(lo + 512, n))
                    ids, mask, logits, reps = self.trace_val.batch(
                        sel, self.config.max_len, self.vocab_pad
                    )
                    out = model.forward(ids, train=False)
                    parts = {"unlabeled_mask": mask}
                    if "LL" in stage.losses:
                        parts["scores"] = out.scores
                        parts["teacher_logits"] = logits
                    if "RL" in stage.losses:
                        parts["proj"] = out.proj
                        parts["teacher_reps"] = reps
                    loss = joint_loss(
                        JointBatch(**parts),
                        self.spec.weights,
                        stage.losses - {"CE"},
                        kld_direction=self.settings.kld_direction,
                    )
                    acc += loss.item() * mask.sum()
                    n_tok += mask.sum()
                total += acc / max(n_tok, 1.0)
        return total

    def _dev_f1(self, model, stage) -> float:
        head = "softmax" if "CE" in stage.losses or self.config.head_input == "hidden" else "logit"
        report = evaluate_tagger(
            model, self.dev_split, self.vocab, self.config.max_len, head=head
        )
        return report.mean_f1

    # -- stage execution ---------------------------------------------------------

    def _steps_per_epoch(self, stage) -> int:
        n_lab = math.ceil(len(self.lab_ids) / self.settings.labeled_batch_size)
        if stage.mode == "labeled":
            return n_lab
        n_unl = math.ceil(self.trace_train.num_records / self.settings.batch_size)
        if stage.mode == "unlabeled":
            return n_unl
        return max(n_lab, n_unl)

    def _epoch_batches(self, stage, epoch_seed: int):
        """Index-level batches for one epoch of this stage."""
        return batch_iter(
            _IndexCorpus(len(self.lab_ids)),
            self.trace_train,
            self.settings.batch_size,
            stage.mode,
            epoch_seed,
            labeled_batch_size=self.settings.labeled_batch_size,
        )

    def train_layer(self, model, state: StageState, stage, layer_name: str, history):
        """Up to `epochs_per_layer` epochs with early stopping and restore-best."""
        settings = self.settings
        n_epochs = settings.epochs_per_layer
        if n_epochs == 0:
            return state
        steps = self._steps_per_epoch(stage)
        schedule = CosineSchedule(settings.lr_high, settings.lr_low, horizon=n_epochs * steps)
        adam = AdamState()
        entry_val = self._validation_loss(model, stage)
        best_val = entry_val
        best_snapshot = model.snapshot()
        bad_epochs = 0
        drop_rng = np.random.default_rng(
            np.random.SeedSequence(
                [self.seed, 0xD0, state.stage_index, _stable_hash(layer_name)]
            )
        )
        step = 0
        for epoch in range(1, n_epochs + 1):
            epoch_seed = _stable_hash(
                (self.seed, state.stage_index, layer_name, epoch)
            )
            losses = []
            for batch in self._epoch_batches(stage, epoch_seed):
                loss = self._stage_batch(model, stage, batch, train=True, rng=drop_rng)
                value = loss.item()
                if not math.isfinite(value):
                    model.restore(best_snapshot)
                    raise TrainingError(
                        f"{self.spec.id} stage {state.stage_index} layer {layer_name}: "
                        f"non-finite training loss at epoch {epoch}"
                    )
                loss.backward()
                adam_step(model.groups, adam, cosine_lr(step, schedule))
                step += 1
                losses.append(value)
            val = self._validation_loss(model, stage)
            dev_f1 = self._dev_f1(model, stage)
            history.append(
                stage=state.stage_index,
                layer=layer_name,
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                val_loss=val,
                dev_f1=dev_f1,
            )
            state.epochs_done += 1
            if val < best_val - settings.min_delta:
                best_val = val
                best_snapshot = model.snapshot()
                bad_epochs = 0
            else:
                if val < best_val:
                    best_val = val
                    best_snapshot = model.snapshot()
                bad_epochs += 1
                if bad_epochs >= settings.patience:
                    break
        model.restore(best_snapshot)
        state.best_val_loss = min(state.best_val_loss, best_val)
        state.best_snapshot = best_snapshot
        return state

    def _run_single(self, vocab, labeled, dev_split, seed) -> tuple[StudentModel, TrainHistory]:
        self.vocab = vocab
        self.dev_split = dev_split
        self.lab_ids, self.lab_onehot, self.lab_mask = self._labeled_arrays(vocab, labeled)
        dev_sents = [s for lang in dev_split for s in dev_split[lang]]
        self.dev_ids, self.dev_onehot, self.dev_mask = self._labeled_arrays(vocab, dev_sents)

        model = StudentModel(self.config, seed=seed, embeddings=self.embeddings)
        history = TrainHistory(
            metadata={
                "strategy": self.spec.id,
                "seed": seed,
                "dev_f1_head": "softmax-or-logit-by-stage",
            }
        )
        previous_losses: frozenset = frozenset()
        for stage_index, stage in enumerate(self.spec.stages, start=1):
            for group in model.groups:
                group.set_frozen(True)
            if (
                "CE" in stage.losses
                and "LL" in previous_losses
                and self.config.head_input == "projected"
            ):
                model.warm_init_softmax_from_logit_head()
            if stage.unfreeze:
                state = StageState(stage_index=stage_index, expected_steps=stage.unfreeze_order())
                for step_roles in stage.unfreeze_order():
                    for role in step_roles:
                        unfreeze_layer(model, state, role)
                    layer_name = "+".join(step_roles)
                    state = self.train_layer(model, state, stage, layer_name, history)
            else:
                state = StageState(stage_index=stage_index, expected_steps=())
                roles = stage.relevant_roles(self.config.head_input)
                for role in roles:
                    model.group_for_role(role).set_frozen(False)
                state.unfrozen = list(roles)
                state = self.train_layer(model, state, stage, "all", history)
            previous_losses = stage.losses
        for group in model.groups:
            group.set_frozen(False)
        return model, history


def _stable_hash(value) -> int:
    """Deterministic small int from a tuple of ints/strings."""
    text = repr(value).encode("utf-8")
    acc = 2166136261
    for b in text:
        acc = ((acc ^ b) * 16777619) % (1 << 32)
    return acc


class _IndexCorpus:
    """Corpus stand-in exposing index-carrying labeled items for batching."""

    def __init__(self, n_labeled: int):
        self.labeled = [_IndexSentence(i) for i in range(n_labeled)]
        self.unlabeled = []


class _IndexSentence:
    __slots__ = ("index",)

    def __init__(self, index: int):
        self.index = index


@dataclass
class StrategyResult:
    """Trained model(s) plus training histories."""

    spec_id: str
    model: StudentModel | None = None
    history: TrainHistory | None = None
    per_language: dict[str, StudentModel] | None = None
    per_language_history: dict[str, TrainHistory] | None = None

    def model_for(self, language: str) -> StudentModel:
        if self.per_language is not None:
            return self.per_language[language]
        return self.model

    def evaluate(self, splits, vocab, max_len: int):
        if self.per_language is not None:
            return evaluate_tagger(
                None, splits, vocab, max_len, model_per_language=self.per_language
            )
        return evaluate_tagger(self.model, splits, vocab, max_len)


def run_strategy(
    spec: StrategySpec | str,
    corpus: Corpus,
    traces: TraceSet | None,
    vocab: WordPieceVocab,
    student_config: StudentConfig,
    seed: int,
    settings: TrainSettings | None = None,
    embeddings: np.ndarray | None = None,
) -> StrategyResult:
    """Execute every stage of a strategy and return the trained student(s).

    For D0 one independent model is trained per language; all other
    strategies train a single shared model. Deterministic for fixed
    (spec, corpus, traces, seed, settings).
    """
    if isinstance(spec, str):
        spec = strategy_spec(spec)
    settings = settings or TrainSettings()
    runner = _StrategyRunner(spec, corpus, traces, student_config, seed, settings, embeddings)

    if spec.per_language:
        models: dict[str, StudentModel] = {}
        histories: dict[str, TrainHistory] = {}
        by_lang = corpus.labeled_by_language()
        for lang in sorted(by_lang):
            dev_split = {lang: corpus.dev.get(lang, [])}
            model, history = runner._run_single(
                vocab, by_lang[lang], dev_split, seed=_stable_hash((seed, lang))
            )
            models[lang] = model
            histories[lang] = history
        return StrategyResult(
            spec_id=spec.id, per_language=models, per_language_history=histories
        )
    model, history = runner._run_single(vocab, list(corpus.labeled), corpus.dev, seed=seed)
    return StrategyResult(spec_id=spec.id, model=model, history=history)
