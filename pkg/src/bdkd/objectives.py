"""Loss functions for offline, mutual and balanced-divergence distillation.

Every loss here treats the peer network's logits as constants (they are
detached internally), so backpropagating a network's loss only ever
reaches that network's own parameters. KL direction selectors are named
from the perspective of the network being trained:

* ``forward``   KL(peer || self)  - mean-seeking, the classic mutual-learning term
* ``reverse``   KL(self || peer)  - mode-seeking
* ``symmetric`` both directions, unweighted
* ``balanced``  both directions, per-sample weights from the entropy gap
* ``none``      no distillation term (plain cross-entropy)

Cross-entropy always acts on unsoftened logits (temperature 1); the KL
terms use the configured temperature and carry the conventional tau^2
factor so their gradient magnitude stays comparable across temperatures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergence import (
    BalanceWeights,
    balance_weights,
    entropy,
    forward_kl,
    reverse_kl,
    softmax_tau,
)
from .tensor import Tensor, row_max

STUDENT_KL_CHOICES = ("forward", "reverse", "symmetric", "balanced")
TEACHER_KL_CHOICES = ("forward", "reverse", "symmetric", "none")
REDUCTIONS = ("mean", "sum")


@dataclass
class DistillConfig:
    """Hyperparameters shared by all distillation losses.

    Defaults reproduce the balanced-divergence method: students weigh
    both KL directions per sample, teachers train against a reverse
    (mode-seeking) term that acts as a regularizer.
    """

    alpha_t: float = 1.0
    alpha_s: float = 1.0
    beta_t: float = 1.0
    beta_s: float = 1.0
    tau: float = 2.0
    v: float = 2.0
    student_kl: str = "balanced"
    teacher_kl: str = "reverse"
    reduction: str = "mean"

    def __post_init__(self):
        for name in ("alpha_t", "alpha_s", "beta_t", "beta_s"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.v < 1.0:
            raise ValueError(f"v must be >= 1, got {self.v}")
        if self.student_kl not in STUDENT_KL_CHOICES:
            raise ValueError(f"unknown student_kl {self.student_kl!r}, expected one of {STUDENT_KL_CHOICES}")
        if self.teacher_kl not in TEACHER_KL_CHOICES:
            raise ValueError(f"unknown teacher_kl {self.teacher_kl!r}, expected one of {TEACHER_KL_CHOICES}")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"unknown reduction {self.reduction!r}, expected one of {REDUCTIONS}")


@dataclass
class LossBreakdown:
    """A scalar training loss plus its detached per-term decomposition.

    ``total`` stays on the tape; the three term fields are plain floats
    of the already-weighted contributions, so they always sum to the
    detached total. Buckets follow the selector perspective: the forward
    bucket collects KL(peer || self) contributions, the reverse bucket
    KL(self || peer).
    """

    total: Tensor
    ce_term: float
    forward_kl_term: float
    reverse_kl_term: float
    per_sample_deltas: BalanceWeights | None = None

    @property
    def value(self) -> float:
        return self.total.item()


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the true labels at temperature 1."""
    return per_sample_cross_entropy(logits, labels).mean()


def per_sample_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Length-n cross-entropy vector; differentiable w.r.t. the logits."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    shift = row_max(logits)
    log_norm = (logits - shift).exp().sum(axis=1).log() + shift[:, 0]
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = (logits * onehot).sum(axis=1)
    return log_norm - picked


def vanilla_kd_loss(
    student_logits: Tensor,
    teacher_logits: Tensor,
    labels: np.ndarray,
    alpha: float,
    tau: float,
    reduction: str = "mean",
) -> LossBreakdown:
    """Offline distillation from a frozen teacher.

    ``alpha`` blends the hard-label term against the softened forward KL:
    alpha * CE + (1 - alpha) * tau^2 * KL(teacher || student).
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    ce = _reduce(per_sample_cross_entropy(student_logits, labels), reduction)
    p_t = softmax_tau(teacher_logits.detach(), tau)
    p_s = softmax_tau(student_logits, tau)
    kl = _reduce(forward_kl(p_t, p_s), reduction)
    total = alpha * ce + ((1.0 - alpha) * tau * tau) * kl
    return LossBreakdown(
        total=total,
        ce_term=alpha * ce.item(),
        forward_kl_term=(1.0 - alpha) * tau * tau * kl.item(),
        reverse_kl_term=0.0,
    )


def bdkd_student_loss(
    student_logits: Tensor,
    teacher_logits: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> LossBreakdown:
    """Student objective: hard-label CE plus selector-weighted KL terms.

    With the ``balanced`` selector the per-sample weights come from the
    sign of the student-teacher entropy gap on the softened outputs.
    """
    return net_distillation_loss(
        student_logits, [teacher_logits], labels,
        alpha=cfg.alpha_s, beta=cfg.beta_s, selector=cfg.student_kl, cfg=cfg,
    )


def bdkd_teacher_loss(
    teacher_logits: Tensor,
    student_logits: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> LossBreakdown:
    """Teacher objective: CE plus (by default) the reverse KL regularizer.

    The default ``reverse`` selector trains the teacher against
    KL(teacher || student) with the student frozen, which tempers
    teacher overconfidence instead of dragging the student.
    """
    return net_distillation_loss(
        teacher_logits, [student_logits], labels,
        alpha=cfg.alpha_t, beta=cfg.beta_t, selector=cfg.teacher_kl, cfg=cfg,
    )


def dml_pair_losses(
    logits_a: Tensor,
    logits_b: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> tuple[LossBreakdown, LossBreakdown]:
    """Deep-mutual-learning baseline: each net gets CE + forward KL to its peer."""
    loss_a = net_distillation_loss(logits_a, [logits_b], labels, alpha=1.0, beta=1.0, selector="forward", cfg=cfg)
    loss_b = net_distillation_loss(logits_b, [logits_a], labels, alpha=1.0, beta=1.0, selector="forward", cfg=cfg)
    return loss_a, loss_b


def multinet_losses_1t2s(
    teacher_logits: Tensor,
    s1_logits: Tensor,
    s2_logits: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> tuple[LossBreakdown, LossBreakdown, LossBreakdown]:
    """One-teacher-two-students losses: (teacher, student1, student2).

    Each student distills from the teacher and from its sibling with
    independently balanced weights per pair; the teacher gets its usual
    regularizing term against both students.
    """
    teacher = net_distillation_loss(
        teacher_logits, [s1_logits, s2_logits], labels,
        alpha=cfg.alpha_t, beta=cfg.beta_t, selector=cfg.teacher_kl, cfg=cfg,
    )
    s1 = net_distillation_loss(
        s1_logits, [teacher_logits, s2_logits], labels,
        alpha=cfg.alpha_s, beta=cfg.beta_s, selector=cfg.student_kl, cfg=cfg,
    )
    s2 = net_distillation_loss(
        s2_logits, [teacher_logits, s1_logits], labels,
        alpha=cfg.alpha_s, beta=cfg.beta_s, selector=cfg.student_kl, cfg=cfg,
    )
    return teacher, s1, s2


def multinet_losses_2t1s(
    t1_logits: Tensor,
    t2_logits: Tensor,
    student_logits: Tensor,
    labels: np.ndarray,
    cfg: DistillConfig,
) -> tuple[LossBreakdown, LossBreakdown, LossBreakdown]:
    """Two-teachers-one-student losses: (teacher1, teacher2, student).

    Teachers regularize against the student only; the student distills
    from both teachers with per-pair balanced weights.
    """
    t1 = net_distillation_loss(
        t1_logits, [student_logits], labels,
        alpha=cfg.alpha_t, beta=cfg.beta_t, selector=cfg.teacher_kl, cfg=cfg,
    )
    t2 = net_distillation_loss(
        t2_logits, [student_logits], labels,
        alpha=cfg.alpha_t, beta=cfg.beta_t, selector=cfg.teacher_kl, cfg=cfg,
    )
    student = net_distillation_loss(
        student_logits, [t1_logits, t2_logits], labels,
        alpha=cfg.alpha_s, beta=cfg.beta_s, selector=cfg.student_kl, cfg=cfg,
    )
    return t1, t2, student


# ----------------------------------------------------------------------
# shared machinery
# ----------------------------------------------------------------------

_SELECTOR_WEIGHTS = {
    "forward": (1.0, 0.0),
    "reverse": (0.0, 1.0),
    "symmetric": (1.0, 1.0),
    "none": (0.0, 0.0),
}


def net_distillation_loss(
    self_logits: Tensor,
    peer_logits: list[Tensor],
    labels: np.ndarray,
    alpha: float,
    beta: float,
    selector: str,
    cfg: DistillConfig,
) -> LossBreakdown:
    """alpha * CE + tau^2 * beta * sum over peers of selected KL terms."""
    if selector not in STUDENT_KL_CHOICES and selector not in TEACHER_KL_CHOICES:
        raise ValueError(f"unknown KL selector {selector!r}")
    tau, v, reduction = cfg.tau, cfg.v, cfg.reduction

    ce = _reduce(per_sample_cross_entropy(self_logits, labels), reduction)
    total = alpha * ce
    ce_term = alpha * ce.item()

    forward_term = 0.0
    reverse_term = 0.0
    deltas: BalanceWeights | None = None
    if selector != "none" and beta != 0.0:
        p_self = softmax_tau(self_logits, tau)
        scale = tau * tau * beta
        for k, peer in enumerate(peer_logits):
            if peer.shape != self_logits.shape:
                raise ValueError(
                    f"peer logits shape {peer.shape} does not match {self_logits.shape}"
                )
            p_peer = softmax_tau(peer.detach(), tau)
            if selector == "balanced":
                weights = balance_weights(entropy(p_self), entropy(p_peer), v)
                d_f, d_r = weights.delta_f, weights.delta_r
                if k == 0:
                    deltas = weights
            else:
                d_f, d_r = _SELECTOR_WEIGHTS[selector]
            if np.any(np.asarray(d_f) != 0.0):
                fkl = _reduce(forward_kl(p_peer, p_self) * d_f, reduction)
                total = total + scale * fkl
                forward_term += scale * fkl.item()
            if np.any(np.asarray(d_r) != 0.0):
                rkl = _reduce(reverse_kl(p_peer, p_self) * d_r, reduction)
                total = total + scale * rkl
                reverse_term += scale * rkl.item()

    return LossBreakdown(
        total=total,
        ce_term=ce_term,
        forward_kl_term=forward_term,
        reverse_kl_term=reverse_term,
        per_sample_deltas=deltas,
    )


def _reduce(per_sample: Tensor, reduction: str) -> Tensor:
    if reduction == "mean":
        return per_sample.mean()
    if reduction == "sum":
        return per_sample.sum()
    raise ValueError(f"unknown reduction {reduction!r}")
