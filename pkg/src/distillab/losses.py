"""Training objectives: cross-entropy, logit regression, representation KLD.

All three losses are means over masked-in token positions, so their
weights keep the same meaning regardless of batch size. The
representation loss converts both the student projection and the teacher
layer output into distributions with a softmax over the feature axis
before taking the KL divergence (teacher as reference by default).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigurationError
from .nn import Tensor

__all__ = ["LossWeights", "JointBatch", "ce_loss", "logit_loss", "repr_loss", "joint_loss", "make_onehot"]

logger = logging.getLogger(__name__)

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Eq-style weights: alpha scales CE, beta the representation loss, gamma the logit loss."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.alpha == self.beta == self.gamma == 0:
            raise ConfigurationError("at least one loss weight must be positive")


def make_onehot(tag_ids: np.ndarray, n_tags: int) -> np.ndarray:
    out = np.zeros(tag_ids.shape + (n_tags,), dtype=np.float64)
    np.put_along_axis(out, tag_ids[..., None], 1.0, axis=-1)
    return out


def _masked_token_mean(per_token: Tensor, mask: np.ndarray) -> Tensor:
    n = float(mask.sum())
    return nn.reduce_sum(per_token * Tensor(mask.astype(np.float64))) / n


def ce_loss(p: Tensor, onehot: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean cross-entropy over masked-in tokens; PAD positions are masked out."""
    if mask.sum() == 0:
        logger.warning("ce_loss: every position masked out, returning 0")
        return Tensor(0.0)
    true_p = (p.data * onehot).sum(axis=-1)[mask.astype(bool)]
    if true_p.size and true_p.min() < _LOG_FLOOR:
        logger.warning(
            "ce_loss: %d true-class probabilities below %g were clamped",
            int((true_p < _LOG_FLOOR).sum()),
            _LOG_FLOOR,
        )
    logp = nn.log(nn.clamp_min(p, _LOG_FLOOR))
    per_token = -nn.reduce_sum(Tensor(onehot) * logp, axis=-1)
    return _masked_token_mean(per_token, mask)


def logit_loss(r: Tensor, teacher_logits: np.ndarray, mask: np.ndarray) -> Tensor:
    """Half squared error between student scores and teacher logits, token mean."""
    if r.shape != teacher_logits.shape:
        raise ConfigurationError(
            f"score shape {r.shape} does not match teacher logits {teacher_logits.shape}"
        )
    if mask.sum() == 0:
        logger.warning("logit_loss: every position masked out, returning 0")
        return Tensor(0.0)
    diff = r - Tensor(teacher_logits)
    per_token = 0.5 * nn.reduce_sum(diff * diff, axis=-1)
    return _masked_token_mean(per_token, mask)


def repr_loss(
    proj: Tensor,
    teacher_reps: np.ndarray,
    mask: np.ndarray,
    direction: str = "forward",
) -> Tensor:
    """KL divergence between feature-softmaxed teacher and student vectors.

    direction='forward' uses the teacher as the reference distribution,
    KLD(teacher || student); 'reverse' swaps the roles.
    """
    if proj.shape != teacher_reps.shape:
        raise ConfigurationError(
            f"projection shape {proj.shape} does not match teacher {teacher_reps.shape}"
        )
    if direction not in ("forward", "reverse"):
        raise ConfigurationError(f"unknown KLD direction {direction!r}")
    if mask.sum() == 0:
        logger.warning("repr_loss: every position masked out, returning 0")
        return Tensor(0.0)

    shifted = teacher_reps - teacher_reps.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p_t = e / e.sum(axis=-1, keepdims=True)
    log_pt = np.log(np.maximum(p_t, _LOG_FLOOR))

    q_s = nn.softmax(proj, axis=-1)
    log_qs = nn.log(nn.clamp_min(q_s, _LOG_FLOOR))
    if direction == "forward":
        entropy = (p_t * log_pt).sum(axis=-1)
        per_token = Tensor(entropy) - nn.reduce_sum(Tensor(p_t) * log_qs, axis=-1)
    else:
        per_token = nn.reduce_sum(q_s * log_qs, axis=-1) - nn.reduce_sum(
            q_s * Tensor(log_pt), axis=-1
        )
    return _masked_token_mean(per_token, mask)


@dataclass
class JointBatch:
    """Model outputs and targets for one optimization step.

    Labeled fields feed CE; unlabeled fields feed the logit and
    representation losses computed against recorded teacher traces.
    """

    probs: Tensor | None = None
    onehot: np.ndarray | None = None
    labeled_mask: np.ndarray | None = None
    scores: Tensor | None = None
    teacher_logits: np.ndarray | None = None
    proj: Tensor | None = None
    teacher_reps: np.ndarray | None = None
    unlabeled_mask: np.ndarray | None = None


def joint_loss(
    batch: JointBatch,
    weights: LossWeights,
    enabled: frozenset | set,
    kld_direction: str = "forward",
) -> Tensor:
    """alpha*CE + beta*RL + gamma*LL over the enabled subset of losses."""
    unknown = set(enabled) - {"CE", "LL", "RL"}
    if unknown:
        raise ConfigurationError(f"unknown losses {sorted(unknown)}")
    total = Tensor(0.0)
    if "CE" in enabled:
        if batch.probs is None or batch.onehot is None or batch.labeled_mask is None:
            raise ConfigurationError("CE enabled but labeled batch data is missing")
        total = total + weights.alpha * ce_loss(batch.probs, batch.onehot, batch.labeled_mask)
    if "RL" in enabled:
        if batch.proj is None or batch.teacher_reps is None or batch.unlabeled_mask is None:
            raise ConfigurationError("RL enabled but trace batch data is missing")
        total = total + weights.beta * repr_loss(
            batch.proj, batch.teacher_reps, batch.unlabeled_mask, direction=kld_direction
        )
    if "LL" in enabled:
        if batch.scores is None or batch.teacher_logits is None or batch.unlabeled_mask is None:
            raise ConfigurationError("LL enabled but trace batch data is missing")
        total = total + weights.gamma * logit_loss(
            batch.scores, batch.teacher_logits, batch.unlabeled_mask
        )
    return total
