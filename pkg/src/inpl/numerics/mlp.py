"""Rectifier MLP classifier, stored as plain numpy weight/bias pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor


@dataclass
class MlpParams:
    """Layer list of ``(W, b)`` with ``W`` shaped ``(fan_in, fan_out)``."""

    layers: list
    activation: str = "relu"

    def __post_init__(self):
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        for (w0, _), (w1, _) in zip(self.layers, self.layers[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ValueError("consecutive layer dimensions do not match")
        for w, b in self.layers:
            if b.shape != (w.shape[1],):
                raise ValueError("bias width does not match weight fan_out")

    @property
    def in_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def n_classes(self):
        return self.layers[-1][0].shape[1]

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` (shared, not copied)."""
        return [a for layer in self.layers for a in layer]

    @classmethod
    def from_arrays(cls, arrays, activation="relu"):
        it = iter(arrays)
        return cls([(w, b) for w, b in zip(it, it)], activation)

    def copy(self):
        return MlpParams.from_arrays([a.copy() for a in self.arrays()], self.activation)

    def astype(self, dtype):
        return MlpParams.from_arrays([a.astype(dtype) for a in self.arrays()], self.activation)


def init_mlp(sizes, rng, dtype=np.float64):
    """Glorot-uniform weights, zero biases. ``sizes = [d, h1, ..., K]``."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
        layers.append((w, np.zeros(fan_out, dtype=dtype)))
    return MlpParams(layers)


def _check_input(params, x):
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(
            f"input width {x.shape[-1]} does not match first layer width {params.in_dim}"
        )
    return x


def mlp_forward(params, x):
    """Logits for a batch ``x`` of shape ``(n, d)`` (or a single ``(d,)`` row)."""
    h = _check_input(params, x)
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0)
    return h


def mlp_forward_tensor(weights, x):
    """Differentiable forward; ``weights`` is a flat list of Tensors."""
    h = x if isinstance(x, Tensor) else Tensor(x)
    n_layers = len(weights) // 2
    for i in range(n_layers):
        h = h @ weights[2 * i] + weights[2 * i + 1]
        if i < n_layers - 1:
            h = h.relu()
    return h
