"""Seeded MLP classifiers of configurable depth and width.

These stand in for the large vision backbones the method is normally
run with: the teacher/student capacity gap is controlled purely through
hidden-layer widths, which keeps parameter counts strictly ordered and
every forward pass deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class MlpSpec:
    """Architecture plus init seed; two equal specs build identical nets."""

    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_widths}")
        # Tuple-ify so specs coming from JSON lists hash and compare cleanly.
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))


class Mlp:
    """Fully-connected ReLU network producing class logits.

    Weights are Glorot-uniform, drawn from a generator seeded by
    ``MlpSpec.seed``; biases start at zero. An empty ``hidden_widths``
    gives a single affine layer (multinomial logistic regression).
    """

    def __init__(self, spec: MlpSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        dims = [spec.input_dim, *spec.hidden_widths, spec.num_classes]
        self.layers: list[tuple[Tensor, Tensor]] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)
            b = Tensor(np.zeros(fan_out), requires_grad=True)
            self.layers.append((w, b))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"expected input of shape (n, {self.spec.input_dim}), got {x.data.shape}"
            )
        out = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            out = out @ w + b
            if i != last:
                out = out.relu()
        return out

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in layer]

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def freeze(self) -> "Mlp":
        """Turn all parameters into constants (for offline teachers)."""
        for p in self.parameters():
            p.requires_grad = False
        return self

    # ------------------------------------------------------------------
    # checkpoint support
    # ------------------------------------------------------------------

    def state(self) -> dict:
        """JSON-ready snapshot: spec fields plus named parameter arrays."""
        params = {}
        for i, (w, b) in enumerate(self.layers):
            params[f"layer{i}.weight"] = {"shape": list(w.data.shape), "data": w.data.ravel().tolist()}
            params[f"layer{i}.bias"] = {"shape": list(b.data.shape), "data": b.data.ravel().tolist()}
        return {
            "spec": {
                "input_dim": self.spec.input_dim,
                "hidden_widths": list(self.spec.hidden_widths),
                "num_classes": self.spec.num_classes,
                "seed": self.spec.seed,
            },
            "params": params,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Mlp":
        spec = MlpSpec(
            input_dim=state["spec"]["input_dim"],
            hidden_widths=tuple(state["spec"]["hidden_widths"]),
            num_classes=state["spec"]["num_classes"],
            seed=state["spec"]["seed"],
        )
        net = cls(spec)
        for i, (w, b) in enumerate(net.layers):
            for name, tensor in ((f"layer{i}.weight", w), (f"layer{i}.bias", b)):
                entry = state["params"][name]
                arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
                if arr.shape != tensor.data.shape:
                    raise ValueError(f"checkpoint shape {arr.shape} does not match {tensor.data.shape} for {name}")
                tensor.data = arr
        return net
