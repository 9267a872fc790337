"""Teacher and student networks.

The teacher is a small transformer encoder with a tag head; the student
is an embedding + BiLSTM (or transformer) trunk with three heads: a
non-linear projection into the teacher's representation width, a linear
logit head regressed against teacher logits, and a softmax head for the
final tag distribution. Student parameters live in five independently
freezable groups so the strategy engine can unfreeze them one at a time.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .embed_compress import svd_reduce
from .errors import ConfigurationError, DataError
from .nn import ParamGroup, Tensor

__all__ = [
    "StudentConfig",
    "TeacherConfig",
    "StudentModel",
    "TeacherModel",
    "StudentOutput",
    "init_embeddings",
    "count_params",
    "save_checkpoint",
    "load_checkpoint",
]

GROUP_ROLES = ("word_emb", "trunk", "projection", "logit_head", "softmax_head")


@dataclass
class StudentConfig:
    vocab_size: int
    emb_dim: int = 16
    hidden: int = 24
    n_tags: int = 11
    teacher_dim: int = 64
    arch: str = "bilstm"
    depth: int = 2  # transformer arch only
    n_heads: int = 4  # transformer arch only
    head_input: str = "projected"
    max_len: int = 24
    dropout: float = 0.2
    mode: str = "tagging"

    def __post_init__(self):
        for name in ("vocab_size", "emb_dim", "hidden", "n_tags", "teacher_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.arch not in ("bilstm", "transformer"):
            raise ConfigurationError(f"unknown student arch {self.arch!r}")
        if self.head_input not in ("projected", "hidden"):
            raise ConfigurationError(f"unknown head_input {self.head_input!r}")
        if self.mode not in ("tagging", "classification"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.arch == "transformer":
            if self.depth < 0:
                raise ConfigurationError("transformer depth must be >= 0")
            if self.depth > 0 and self.emb_dim % self.n_heads:
                raise ConfigurationError(
                    f"emb_dim {self.emb_dim} not divisible by {self.n_heads} heads"
                )

    @property
    def trunk_width(self) -> int:
        return 2 * self.hidden if self.arch == "bilstm" else self.emb_dim


@dataclass
class TeacherConfig:
    vocab_size: int
    width: int = 64
    layers: int = 4
    n_heads: int = 4
    n_tags: int = 11
    max_len: int = 24
    dropout: float = 0.2
    mode: str = "tagging"

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigurationError("teacher needs at least one layer")
        if self.width % self.n_heads:
            raise ConfigurationError(
                f"width {self.width} not divisible by {self.n_heads} heads"
            )


def _xavier(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _param(rng, shape) -> Tensor:
    return Tensor(_xavier(rng, shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class _TransformerLayer:
    """Post-LN encoder layer over flat parameter tensors."""

    def __init__(self, rng, width: int, n_heads: int):
        self.width = width
        self.n_heads = n_heads
        self.head_dim = width // n_heads
        ffn = 4 * width
        self.wq, self.bq = _param(rng, (width, width)), _zeros(width)
        self.wk, self.bk = _param(rng, (width, width)), _zeros(width)
        self.wv, self.bv = _param(rng, (width, width)), _zeros(width)
        self.wo, self.bo = _param(rng, (width, width)), _zeros(width)
        self.w1, self.b1 = _param(rng, (width, ffn)), _zeros(ffn)
        self.w2, self.b2 = _param(rng, (ffn, width)), _zeros(width)
        self.ln1_g, self.ln1_b = _ones(width), _zeros(width)
        self.ln2_g, self.ln2_b = _ones(width), _zeros(width)

    def tensors(self) -> list[Tensor]:
        return [
            self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo,
            self.w1, self.b1, self.w2, self.b2,
            self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b,
        ]

    def _split_heads(self, x: Tensor, B: int, K: int) -> Tensor:
        x = nn.reshape(x, (B, K, self.n_heads, self.head_dim))
        x = nn.transpose(x, (0, 2, 1, 3))
        return nn.reshape(x, (B * self.n_heads, K, self.head_dim))

    def forward(self, x: Tensor, mask_bias: np.ndarray) -> Tensor:
        B, K, _ = x.shape
        q = self._split_heads(nn.matmul(x, self.wq) + self.bq, B, K)
        k = self._split_heads(nn.matmul(x, self.wk) + self.bk, B, K)
        v = self._split_heads(nn.matmul(x, self.wv) + self.bv, B, K)
        scores = nn.bmm(q, nn.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(self.head_dim))
        probs = nn.softmax(scores + Tensor(mask_bias), axis=-1)
        ctx = nn.bmm(probs, v)
        ctx = nn.reshape(ctx, (B, self.n_heads, K, self.head_dim))
        ctx = nn.reshape(nn.transpose(ctx, (0, 2, 1, 3)), (B, K, self.width))
        attn = nn.matmul(ctx, self.wo) + self.bo
        x = nn.layer_norm(x + attn, self.ln1_g, self.ln1_b)
        ffn = nn.matmul(nn.gelu(nn.matmul(x, self.w1) + self.b1), self.w2) + self.b2
        return nn.layer_norm(x + ffn, self.ln2_g, self.ln2_b)


def _attention_bias(piece_ids: np.ndarray, pad_id: int, n_heads: int) -> np.ndarray:
    """(B*heads, 1, K) additive bias: large negative at PAD key positions."""
    pad = piece_ids == pad_id
    bias = np.where(pad, -1e9, 0.0)[:, None, :]
    return np.repeat(bias, n_heads, axis=0)


class _ModelBase:
    groups: list[ParamGroup]

    def group(self, name: str) -> ParamGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise ConfigurationError(f"no parameter group named {name!r}")

    def snapshot(self) -> list[np.ndarray]:
        return [t.data.copy() for g in self.groups for t in g.tensors]

    def restore(self, snap: list[np.ndarray]) -> None:
        tensors = [t for g in self.groups for t in g.tensors]
        if len(tensors) != len(snap):
            raise ConfigurationError("snapshot does not match model")
        for t, arr in zip(tensors, snap):
            t.data[...] = arr

    def state_bytes(self) -> bytes:
        return b"".join(t.data.tobytes() for g in self.groups for t in g.tensors)


@dataclass
class StudentOutput:
    hidden: Tensor  # (B, K, trunk_width) or (B, trunk_width) in classification mode
    proj: Tensor | None  # (.., teacher_dim)
    scores: Tensor | None  # (.., n_tags) regression head
    probs: Tensor  # (.., n_tags) simplex rows


class StudentModel(_ModelBase):
    """Embedding + trunk + projection/logit/softmax heads in five groups."""

    def __init__(self, config: StudentConfig, seed: int = 0, embeddings: np.ndarray | None = None):
        self.config = config
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57D0]))
        c = config
        if embeddings is None:
            emb = rng.normal(0.0, 0.1, size=(c.vocab_size, c.emb_dim))
        else:
            emb = np.asarray(embeddings, dtype=np.float64)
            if emb.shape != (c.vocab_size, c.emb_dim):
                raise ConfigurationError(
                    f"embedding matrix {emb.shape} does not match "
                    f"({c.vocab_size}, {c.emb_dim})"
                )
        self.word_emb = Tensor(emb.copy(), requires_grad=True)

        width = c.trunk_width
        if c.arch == "bilstm":
            H = c.hidden
            self.wx_f = _param(rng, (c.emb_dim, 4 * H))
            self.wh_f = _param(rng, (H, 4 * H))
            self.b_f = _zeros(4 * H)
            self.wx_b = _param(rng, (c.emb_dim, 4 * H))
            self.wh_b = _param(rng, (H, 4 * H))
            self.b_b = _zeros(4 * H)
            # forget-gate bias starts open so long-range state survives early training
            self.b_f.data[H : 2 * H] = 1.0
            self.b_b.data[H : 2 * H] = 1.0
            trunk_tensors = [self.wx_f, self.wh_f, self.b_f, self.wx_b, self.wh_b, self.b_b]
            trunk_name = "bilstm"
        else:
            self.pos_emb = Tensor(rng.normal(0.0, 0.1, size=(c.max_len, c.emb_dim)), requires_grad=True)
            self.layers = [_TransformerLayer(rng, c.emb_dim, c.n_heads) for _ in range(c.depth)]
            trunk_tensors = [self.pos_emb] + [t for l in self.layers for t in l.tensors()]
            trunk_name = "transformer"

        self.proj_w = _param(rng, (width, c.teacher_dim))
        self.proj_b = _zeros(c.teacher_dim)
        self.logit_w = _param(rng, (c.teacher_dim, c.n_tags))
        self.logit_b = _zeros(c.n_tags)
        if c.head_input == "projected":
            self.softmax_w = _param(rng, (c.teacher_dim, c.n_tags))
            self.softmax_b = _zeros(c.n_tags)
            softmax_tensors = [self.softmax_w, self.softmax_b]
        else:
            self.softmax_w = _param(rng, (width, c.n_tags))
            self.softmax_b = None
            softmax_tensors = [self.softmax_w]

        self.groups = [
            ParamGroup("word_emb", [self.word_emb]),
            ParamGroup(trunk_name, trunk_tensors),
            ParamGroup("projection", [self.proj_w, self.proj_b]),
            ParamGroup("logit_head", [self.logit_w, self.logit_b]),
            ParamGroup("softmax_head", softmax_tensors),
        ]
        self.pad_id = 0

    @property
    def trunk_group(self) -> ParamGroup:
        return self.groups[1]

    def group_for_role(self, role: str) -> ParamGroup:
        if role == "trunk":
            return self.trunk_group
        return self.group(role)

    def warm_init_softmax_from_logit_head(self) -> None:
        """Copy the trained logit head into the softmax head (same shapes)."""
        if self.config.head_input != "projected":
            raise ConfigurationError("warm init needs the projected head wiring")
        self.softmax_w.data[...] = self.logit_w.data
        self.softmax_b.data[...] = self.logit_b.data

    def trunk_forward(self, piece_ids: np.ndarray, train: bool = False, rng=None) -> Tensor:
        c = self.config
        x = nn.embedding(self.word_emb, piece_ids)
        if c.arch == "bilstm":
            fwd = nn.lstm_direction(x, self.wx_f, self.wh_f, self.b_f)
            bwd = nn.flip_time(nn.lstm_direction(nn.flip_time(x), self.wx_b, self.wh_b, self.b_b))
            h = nn.concat([fwd, bwd], axis=-1)
        else:
            if piece_ids.shape[1] != c.max_len:
                raise ConfigurationError(
                    f"expected sequences of length {c.max_len}, got {piece_ids.shape[1]}"
                )
            h = x + nn.reshape(self.pos_emb, (1, c.max_len, c.emb_dim))
            bias = _attention_bias(piece_ids, self.pad_id, c.n_heads)
            for layer in self.layers:
                h = layer.forward(h, bias)
        if train and c.dropout > 0.0:
            if rng is None:
                raise ConfigurationError("training forward needs an rng for dropout")
            h = nn.dropout(h, c.dropout, rng)
        return h

    def forward(self, piece_ids: np.ndarray, train: bool = False, rng=None) -> StudentOutput:
        c = self.config
        h = self.trunk_forward(piece_ids, train=train, rng=rng)
        if c.mode == "classification":
            # sentence representation = state at the last content piece
            pad_mask = piece_ids != self.pad_id
            last = pad_mask.shape[1] - 1 - np.argmax(pad_mask[:, ::-1], axis=1)
            h = nn.gather_time(h, last)
        if c.head_input == "projected":
            proj = nn.gelu(nn.matmul(h, self.proj_w) + self.proj_b)
            scores = nn.matmul(proj, self.logit_w) + self.logit_b
            probs = nn.softmax(nn.matmul(proj, self.softmax_w) + self.softmax_b, axis=-1)
        else:
            proj = None
            scores = None
            probs = nn.softmax(nn.matmul(h, self.softmax_w), axis=-1)
        return StudentOutput(hidden=h, proj=proj, scores=scores, probs=probs)

    def predict_probs(self, piece_ids: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            return self.forward(piece_ids, train=False).probs.data

    def predict_scores(self, piece_ids: np.ndarray) -> np.ndarray:
        """Logit-head scores; the classification pathway before stage 3."""
        if self.config.head_input != "projected":
            return self.predict_probs(piece_ids)
        with nn.no_grad():
            return self.forward(piece_ids, train=False).scores.data


class TeacherModel(_ModelBase):
    """Transformer encoder with a tag head; exports per-layer representations."""

    def __init__(self, config: TeacherConfig, seed: int = 0):
        self.config = config
        c = config
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7EAC]))
        self.piece_emb = Tensor(rng.normal(0.0, 0.1, size=(c.vocab_size, c.width)), requires_grad=True)
        self.pos_emb = Tensor(rng.normal(0.0, 0.1, size=(c.max_len, c.width)), requires_grad=True)
        self.layers = [_TransformerLayer(rng, c.width, c.n_heads) for _ in range(c.layers)]
        self.head_w = _param(rng, (c.width, c.n_tags))
        self.head_b = _zeros(c.n_tags)
        self.groups = [ParamGroup("embedding", [self.piece_emb, self.pos_emb])]
        for i, layer in enumerate(self.layers):
            self.groups.append(ParamGroup(f"layer{i}", layer.tensors()))
        self.groups.append(ParamGroup("head", [self.head_w, self.head_b]))
        self.pad_id = 0

    def forward(
        self, piece_ids: np.ndarray, train: bool = False, rng=None
    ) -> tuple[Tensor, list[Tensor]]:
        """Return (tag logits, post-layer-norm outputs of every layer)."""
        c = self.config
        K = piece_ids.shape[1]
        if K != c.max_len:
            raise ConfigurationError(f"expected sequences of length {c.max_len}, got {K}")
        x = nn.embedding(self.piece_emb, piece_ids) + nn.reshape(self.pos_emb, (1, c.max_len, c.width))
        bias = _attention_bias(piece_ids, self.pad_id, c.n_heads)
        layer_outputs: list[Tensor] = []
        for layer in self.layers:
            x = layer.forward(x, bias)
            layer_outputs.append(x)
        top = x
        if train and c.dropout > 0.0:
            if rng is None:
                raise ConfigurationError("training forward needs an rng for dropout")
            top = nn.dropout(top, c.dropout, rng)
        if c.mode == "classification":
            top = nn.gather_time(top, np.zeros(piece_ids.shape[0], dtype=np.int64))
        logits = nn.matmul(top, self.head_w) + self.head_b
        return logits, layer_outputs

    def export(self, piece_ids: np.ndarray, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """Tag logits and layer-`layer` representations (1-based), no grads."""
        if not (1 <= layer <= self.config.layers):
            raise ConfigurationError(
                f"layer {layer} out of range 1..{self.config.layers}"
            )
        with nn.no_grad():
            logits, layer_outputs = self.forward(piece_ids, train=False)
        return logits.data, layer_outputs[layer - 1].data

    def predict_probs(self, piece_ids: np.ndarray) -> np.ndarray:
        with nn.no_grad():
            logits, _ = self.forward(piece_ids, train=False)
            return nn.softmax(logits, axis=-1).data


def init_embeddings(
    source: str,
    vocab_size: int,
    emb_dim: int,
    seed: int = 0,
    matrix: np.ndarray | None = None,
    path=None,
    vocab=None,
) -> np.ndarray:
    """Build the V x E student embedding matrix.

    source='random' draws from a seeded normal; 'svd' compresses the
    teacher's V x D piece embeddings with truncated SVD; 'file' reads
    whitespace-separated ``word v1 .. vE`` rows, falling back to random
    for words the file does not cover.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE3B]))
    if source == "random":
        return rng.normal(0.0, 0.1, size=(vocab_size, emb_dim))
    if source == "svd":
        if matrix is None:
            raise ConfigurationError("svd initialization needs the teacher matrix")
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != vocab_size:
            raise ConfigurationError(
                f"teacher matrix has {matrix.shape[0]} rows, expected {vocab_size}"
            )
        return svd_reduce(matrix, emb_dim)
    if source == "file":
        if path is None or vocab is None:
            raise ConfigurationError("file initialization needs a path and a vocabulary")
        out = rng.normal(0.0, 0.1, size=(vocab_size, emb_dim))
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if len(values) != emb_dim:
                    raise DataError(
                        f"{path}:{lineno}: expected {emb_dim} values, got {len(values)}"
                    )
                if word in vocab.piece_to_id:
                    out[vocab.piece_to_id[word]] = [float(v) for v in values]
        return out
    raise ConfigurationError(f"unknown embedding source {source!r}")


def count_params(model: _ModelBase) -> int:
    """Exact number of scalar parameters across all groups."""
    return sum(g.num_params() for g in model.groups)


# -- checkpoints -------------------------------------------------------------------

_MAGIC = b"DLCK"
_VERSION = 1


def save_checkpoint(model: _ModelBase, path, meta: dict | None = None) -> None:
    kind = "student" if isinstance(model, StudentModel) else "teacher"
    header = {"kind": kind, "config": asdict(model.config), "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(model.groups)))
        for group in model.groups:
            name = group.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", len(group.tensors)))
            for t in group.tensors:
                fh.write(struct.pack("<I", t.data.ndim))
                fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
                fh.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path):
    """Rebuild a StudentModel or TeacherModel from a checkpoint file."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        if header["kind"] == "student":
            model = StudentModel(StudentConfig(**header["config"]))
        else:
            model = TeacherModel(TeacherConfig(**header["config"]))
        (n_groups,) = struct.unpack("<I", fh.read(4))
        if n_groups != len(model.groups):
            raise DataError(f"{path}: group count mismatch")
        for group in model.groups:
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            if name != group.name:
                raise DataError(f"{path}: expected group {group.name!r}, found {name!r}")
            (n_tensors,) = struct.unpack("<I", fh.read(4))
            if n_tensors != len(group.tensors):
                raise DataError(f"{path}: tensor count mismatch in group {name!r}")
            for t in group.tensors:
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                if shape != t.data.shape:
                    raise DataError(f"{path}: shape mismatch in group {name!r}")
                payload = fh.read(8 * int(np.prod(shape)))
                t.data[...] = np.frombuffer(payload, dtype="<f8").reshape(shape)
    return model, header["meta"]
