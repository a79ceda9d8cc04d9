"""Temperature-softened distributions, entropies and KL divergences.

This module carries the statistical core of the balanced-divergence
training objective: each network's logits become a batch of softened
categorical distributions, per-sample entropies of those distributions
measure predictive uncertainty, and the sign of the entropy gap between
two networks decides which KL direction gets emphasised for each sample.

All logarithms are natural. Probabilities are clamped at ``PROB_FLOOR``
before any log so that the 0*log(0) = 0 convention holds without NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, row_max

# Floor applied to probabilities before log. It exists only so that
# exact zeros in hand-built distributions stay finite; every float64
# softmax output is orders of magnitude above it, keeping divergences
# bit-for-bit faithful to the unclamped formulas.
PROB_FLOOR = 1e-300


@dataclass
class ProbBatch:
    """A batch of temperature-softened categorical distributions.

    ``probs`` rows sum to 1 and stay attached to the tape when the source
    logits require gradients. ``source_logits`` is None for batches built
    directly from probabilities (test fixtures, limit cases).
    """

    probs: Tensor
    tau: float
    source_logits: Tensor | None = None

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def from_probs(cls, probs, tau: float = 1.0) -> "ProbBatch":
        """Wrap explicit probabilities (rows must sum to 1)."""
        arr = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        rowsums = arr.sum(axis=1)
        if not np.allclose(rowsums, 1.0, atol=1e-9):
            raise ValueError(f"rows must sum to 1, got sums {rowsums}")
        if np.any(arr < 0.0):
            raise ValueError("probabilities must be nonnegative")
        return cls(probs=Tensor(arr), tau=float(tau))


@dataclass
class EntropyVector:
    """Per-sample entropies in nats, kept off the tape by construction."""

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class BalanceWeights:
    """Per-sample (delta_f, delta_r) emphasis pairs.

    For each sample exactly one of the two weights equals ``v`` and the
    other equals 1 (both 1 when v == 1). The weights are data-dependent
    constants and never enter the gradient tape.
    """

    delta_f: np.ndarray
    delta_r: np.ndarray
    v: float

    def __len__(self) -> int:
        return len(self.delta_f)


def softmax_tau(logits: Tensor, tau: float) -> ProbBatch:
    """Rowwise softmax of ``logits / tau`` with max-subtraction for stability.

    Differentiable with respect to the logits. The subtracted row maximum
    is a constant shift, which softmax is invariant to, so it contributes
    nothing to the gradient.
    """
    if tau <= 0.0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if logits.data.ndim != 2 or logits.data.shape[1] < 2:
        raise ValueError(f"logits must be n x c with c >= 2, got shape {logits.data.shape}")
    scaled = logits * (1.0 / tau)
    shifted = scaled - row_max(scaled)
    exps = shifted.exp()
    probs = exps / exps.sum(axis=1, keepdims=True)
    return ProbBatch(probs=probs, tau=float(tau), source_logits=logits)


def entropy(p: ProbBatch) -> EntropyVector:
    """Per-row -sum(p * ln p) of the softened distribution, in nats.

    Computed on detached values: entropies only steer the balance weights
    and must never be differentiated through.
    """
    probs = p.probs.data
    logs = np.log(np.maximum(probs, PROB_FLOOR))
    return EntropyVector(values=-(probs * logs).sum(axis=1))


def forward_kl(p: ProbBatch, q: ProbBatch) -> Tensor:
    """Per-sample KL(p || q): mean-seeking when minimised over q.

    Returns a length-n tensor; the caller chooses the batch reduction.
    Differentiable with respect to whichever argument is on the tape.
    """
    _check_pair(p, q)
    log_ratio = p.probs.clamp_min(PROB_FLOOR).log() - q.probs.clamp_min(PROB_FLOOR).log()
    return (p.probs * log_ratio).sum(axis=1)


def reverse_kl(p: ProbBatch, q: ProbBatch) -> Tensor:
    """Per-sample KL(q || p): mode-seeking when minimised over q."""
    return forward_kl(q, p)


def balance_weights(h_s: EntropyVector, h_t: EntropyVector, v: float) -> BalanceWeights:
    """Per-sample forward/reverse emphasis from the entropy gap H_s - H_t.

    A negative gap means the first network (the student of the pair) is
    underestimating the other's uncertainty, so the forward term gets
    weight ``v``; a nonnegative gap (ties included) emphasises the
    reverse term instead.
    """
    if v < 1.0:
        raise ValueError(f"v must be >= 1, got {v}")
    if len(h_s) != len(h_t):
        raise ValueError(f"entropy vectors differ in length: {len(h_s)} vs {len(h_t)}")
    gap = h_s.values - h_t.values
    delta_f = np.where(gap < 0.0, v, 1.0)
    delta_r = np.where(gap >= 0.0, v, 1.0)
    return BalanceWeights(delta_f=delta_f, delta_r=delta_r, v=float(v))


def _check_pair(p: ProbBatch, q: ProbBatch) -> None:
    if p.probs.shape != q.probs.shape:
        raise ValueError(f"shape mismatch: {p.probs.shape} vs {q.probs.shape}")
    if p.tau != q.tau:
        raise ValueError(f"temperature mismatch: {p.tau} vs {q.tau}")
