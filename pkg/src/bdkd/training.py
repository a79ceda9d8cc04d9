"""Epoch-level training loops: co-training, offline distillation, scratch.

One run owns one batch-order generator and one optimizer per network.
Inside the co-training loop both losses are built and backpropagated
from the *pre-update* parameters before either optimizer steps, so the
two simultaneous updates cannot see each other's new weights and the
step order is immaterial.

Every recorded number is a pure function of (seed, config, data); any
NaN in a loss term aborts the epoch rather than corrupting the record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .calibration import softmax_probs
from .data import Dataset
from .divergence import PROB_FLOOR
from .models import Mlp
from .objectives import (
    DistillConfig,
    LossBreakdown,
    multinet_losses_1t2s,
    multinet_losses_2t1s,
    vanilla_kd_loss,
    bdkd_student_loss,
    bdkd_teacher_loss,
    net_distillation_loss,
)
from .optim import SgdMomentum
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    """A loss term became NaN; carries the offending term's name."""

    def __init__(self, term: str):
        super().__init__(f"training aborted: loss term {term!r} is NaN")
        self.term = term


# Sub-seed roles: dataset, split, each network's init, batch order.
ROLE_DATA = 0
ROLE_SPLIT = 1
ROLE_TEACHER = 2
ROLE_STUDENT = 3
ROLE_BATCHES = 4
ROLE_EXTRA_NET = 5


def derive_seed(seed: int, role: int) -> int:
    """Independent deterministic sub-seed for one role of a run.

    Roles keep the dataset, each network's init and the batch order
    statistically decoupled while staying reproducible from one seed.
    """
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(role,)).generate_state(1)[0])


@dataclass
class EpochStats:
    """Batch-size-weighted means of the loss terms over one epoch."""

    losses: dict[str, dict[str, float]]
    delta_r_fraction: float | None = None


@dataclass
class RunRecord:
    """Everything reproducible about a finished run, JSON-serializable."""

    config: dict
    seed: int
    epochs: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"config": self.config, "seed": self.seed, "epochs": self.epochs}
        payload.update(self.extra)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def iter_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Seeded shuffled index batches; the last partial batch is kept."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def cotrain_epoch(
    teacher: Mlp,
    student: Mlp,
    train: Dataset,
    cfg: DistillConfig,
    opt_t: SgdMomentum,
    opt_s: SgdMomentum,
    batch_size: int,
    rng: np.random.Generator,
) -> EpochStats:
    """One epoch of simultaneous teacher/student updates on shared batches."""
    tallies = {"teacher": _Tally(), "student": _Tally()}
    gap_hits = 0.0
    n_seen = 0
    for idx in iter_batches(len(train), batch_size, rng):
        xb = Tensor(train.features[idx])
        yb = train.labels[idx]
        z_t = teacher.forward(xb)
        z_s = student.forward(xb)
        loss_t = bdkd_teacher_loss(z_t, z_s, yb, cfg)
        loss_s = bdkd_student_loss(z_s, z_t, yb, cfg)
        _check_finite("teacher", loss_t)
        _check_finite("student", loss_s)
        loss_t.total.backward()
        loss_s.total.backward()
        opt_t.step()
        opt_s.step()
        tallies["teacher"].add(loss_t, len(idx))
        tallies["student"].add(loss_s, len(idx))
        gap_hits += entropy_gap_fraction(z_s.data, z_t.data, cfg.tau) * len(idx)
        n_seen += len(idx)
    return EpochStats(
        losses={name: tally.means() for name, tally in tallies.items()},
        delta_r_fraction=gap_hits / n_seen,
    )


def scratch_epoch(
    net: Mlp,
    train: Dataset,
    opt: SgdMomentum,
    batch_size: int,
    rng: np.random.Generator,
    name: str = "net",
) -> EpochStats:
    """Plain cross-entropy training of a single network."""
    cfg = DistillConfig(teacher_kl="none")
    tally = _Tally()
    for idx in iter_batches(len(train), batch_size, rng):
        logits = net.forward(Tensor(train.features[idx]))
        loss = net_distillation_loss(logits, [], train.labels[idx], alpha=1.0, beta=0.0, selector="none", cfg=cfg)
        _check_finite(name, loss)
        loss.total.backward()
        opt.step()
        tally.add(loss, len(idx))
    return EpochStats(losses={name: tally.means()})


def offline_distill_epoch(
    frozen_teacher: Mlp,
    student: Mlp,
    train: Dataset,
    alpha: float,
    tau: float,
    opt_s: SgdMomentum,
    batch_size: int,
    rng: np.random.Generator,
    reduction: str = "mean",
) -> EpochStats:
    """One epoch of classic offline distillation from a frozen teacher."""
    for p in frozen_teacher.parameters():
        if p.requires_grad:
            raise ValueError("offline distillation requires a frozen teacher (call freeze())")
    tally = _Tally()
    for idx in iter_batches(len(train), batch_size, rng):
        xb = Tensor(train.features[idx])
        yb = train.labels[idx]
        z_t = frozen_teacher.forward(xb)
        z_s = student.forward(xb)
        loss = vanilla_kd_loss(z_s, z_t, yb, alpha=alpha, tau=tau, reduction=reduction)
        _check_finite("student", loss)
        loss.total.backward()
        opt_s.step()
        tally.add(loss, len(idx))
    return EpochStats(losses={"student": tally.means()})


def multinet_epoch(
    nets: dict[str, Mlp],
    optimizers: dict[str, SgdMomentum],
    train: Dataset,
    cfg: DistillConfig,
    batch_size: int,
    rng: np.random.Generator,
    arrangement: str,
) -> EpochStats:
    """Three-network co-training: '1t2s' or '2t1s'.

    The recorded delta fraction tracks the primary student against the
    (first) teacher.
    """
    if arrangement == "1t2s":
        names = ("teacher", "student", "student2")
    elif arrangement == "2t1s":
        names = ("teacher", "teacher2", "student")
    else:
        raise ValueError(f"unknown arrangement {arrangement!r}")
    if set(names) != set(nets) or set(names) != set(optimizers):
        raise ValueError(f"expected networks {names}, got {sorted(nets)}")

    tallies = {name: _Tally() for name in names}
    gap_hits = 0.0
    n_seen = 0
    for idx in iter_batches(len(train), batch_size, rng):
        xb = Tensor(train.features[idx])
        yb = train.labels[idx]
        logits = {name: nets[name].forward(xb) for name in names}
        if arrangement == "1t2s":
            out = multinet_losses_1t2s(logits["teacher"], logits["student"], logits["student2"], yb, cfg)
            losses = dict(zip(("teacher", "student", "student2"), out))
        else:
            out = multinet_losses_2t1s(logits["teacher"], logits["teacher2"], logits["student"], yb, cfg)
            losses = dict(zip(("teacher", "teacher2", "student"), out))
        for name in names:
            _check_finite(name, losses[name])
        for name in names:
            losses[name].total.backward()
        for name in names:
            optimizers[name].step()
            tallies[name].add(losses[name], len(idx))
        gap_hits += entropy_gap_fraction(logits["student"].data, logits["teacher"].data, cfg.tau) * len(idx)
        n_seen += len(idx)
    return EpochStats(
        losses={name: tally.means() for name, tally in tallies.items()},
        delta_r_fraction=gap_hits / n_seen,
    )


def evaluate(net: Mlp, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Top-1 accuracy plus the raw logits (kept for calibration)."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = net.forward(Tensor(dataset.features)).data
    predictions = logits.argmax(axis=1)
    return float((predictions == dataset.labels).mean()), logits


def entropy_gap_fraction(student_logits: np.ndarray, teacher_logits: np.ndarray, tau: float) -> float:
    """Fraction of samples whose softened student entropy >= teacher entropy.

    This is exactly the fraction of samples where the reverse-KL weight
    is the emphasised one under the balanced rule, independent of v.
    """
    h_s = _softened_entropy(student_logits, tau)
    h_t = _softened_entropy(teacher_logits, tau)
    return float((h_s - h_t >= 0.0).mean())


def _softened_entropy(logits: np.ndarray, tau: float) -> np.ndarray:
    probs = softmax_probs(np.asarray(logits) / tau)
    return -(probs * np.log(np.maximum(probs, PROB_FLOOR))).sum(axis=1)


class _Tally:
    """Sample-weighted running means of a LossBreakdown's terms."""

    def __init__(self):
        self.weight = 0
        self.sums = {"total": 0.0, "cross_entropy": 0.0, "forward_kl": 0.0, "reverse_kl": 0.0}

    def add(self, loss: LossBreakdown, n: int) -> None:
        self.weight += n
        self.sums["total"] += loss.value * n
        self.sums["cross_entropy"] += loss.ce_term * n
        self.sums["forward_kl"] += loss.forward_kl_term * n
        self.sums["reverse_kl"] += loss.reverse_kl_term * n

    def means(self) -> dict[str, float]:
        return {key: val / self.weight for key, val in self.sums.items()}


def _check_finite(net_name: str, loss: LossBreakdown) -> None:
    for term, value in (
        ("cross_entropy", loss.ce_term),
        ("forward_kl", loss.forward_kl_term),
        ("reverse_kl", loss.reverse_kl_term),
        ("total", loss.value),
    ):
        if np.isnan(value):
            raise TrainingDiverged(f"{net_name}.{term}")
