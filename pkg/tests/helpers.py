"""Shared numeric test utilities: finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from bdkd.tensor import Tensor, zero_grad


def finite_difference_gradient(build_loss, leaf: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. one leaf tensor.

    ``build_loss`` must rebuild the loss from the leaves' current data on
    every call; the leaf's data is perturbed in place and restored.
    """
    numeric = np.zeros_like(leaf.data)
    it = np.nditer(leaf.data, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        original = leaf.data[idx]
        leaf.data[idx] = original + h
        up = build_loss().item()
        leaf.data[idx] = original - h
        down = build_loss().item()
        leaf.data[idx] = original
        numeric[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return numeric


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced to the maximum.

    The floor keeps near-zero gradients from inflating the ratio with
    finite-difference noise.
    """
    scale = np.maximum(floor, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / scale).max())


def assert_gradients_match(build_loss, leaves, h: float = 1e-5, rtol: float = 1e-4) -> None:
    """Backprop ``build_loss`` once and compare every leaf against FD."""
    zero_grad(leaves)
    build_loss().backward()
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = finite_difference_gradient(build_loss, leaf, h=h)
        err = max_relative_error(analytic, numeric)
        assert err < rtol, f"gradient mismatch (max rel err {err:.3e}) for leaf of shape {leaf.data.shape}"
    zero_grad(leaves)
