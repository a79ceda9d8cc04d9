"""Heavy-ball SGD and the milestone step-decay schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class StepDecaySchedule:
    """Learning rate divided by a fixed factor at each milestone epoch.

    Epochs are 0-based; the rate for epoch ``e`` is
    ``base_lr * decay_factor ** |{m in milestones : m <= e}|``.
    """

    def __init__(self, base_lr: float, milestones: tuple[int, ...] = (), decay_factor: float = 0.1):
        if base_lr <= 0.0:
            raise ValueError(f"base_lr must be positive, got {base_lr}")
        if decay_factor <= 0.0:
            raise ValueError(f"decay_factor must be positive, got {decay_factor}")
        self.base_lr = float(base_lr)
        self.milestones = tuple(sorted(int(m) for m in milestones))
        self.decay_factor = float(decay_factor)

    def lr_at(self, epoch: int) -> float:
        hits = sum(1 for m in self.milestones if m <= epoch)
        return self.base_lr * self.decay_factor**hits


class SgdMomentum:
    """v <- momentum * v + g; p <- p - lr * v. Grads are zeroed by step()."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ):
        if lr <= 0.0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                raise RuntimeError("parameter has no gradient; run backward() before step()")
            g = p.grad
            if self.weight_decay != 0.0:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
