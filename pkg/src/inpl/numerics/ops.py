"""Scalar reductions, gradients, optimizers and moving averages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor
from .mlp import MlpParams


class NonFiniteError(FloatingPointError):
    """Raised when a loss, gradient or update stops being finite."""


def logsumexp(v, T=1.0, axis=-1):
    """``T * log(sum(exp(v / T)))`` along ``axis``, shifted by the max."""
    v = np.asarray(v, dtype=float) if not isinstance(v, np.ndarray) else v
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("logsumexp of an empty array")
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    m = v.max(axis=axis, keepdims=True)
    out = m + T * np.log(np.exp((v - m) / T).sum(axis=axis, keepdims=True))
    out = np.squeeze(out, axis=axis)
    return out[()] if out.ndim == 0 else out


def _flat(params):
    if isinstance(params, MlpParams):
        return params.arrays()
    return list(params)


def value_and_grad(loss_fn, params):
    """Evaluate ``loss_fn`` on leaf Tensors built from ``params`` and backprop.

    ``loss_fn`` receives the flat ``[W0, b0, W1, b1, ...]`` Tensor list and
    returns a scalar Tensor. Gradients come back in the same structure as
    ``params``.
    """
    arrays = _flat(params)
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    loss = loss_fn(leaves)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteError(f"loss is not finite: {value}")
    if loss.requires_grad:
        loss.backward()
    grads = [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]
    if isinstance(params, MlpParams):
        grads = MlpParams.from_arrays(grads, params.activation)
    return value, grads


def grad(loss_fn, params):
    return value_and_grad(loss_fn, params)[1]


@dataclass
class OptimizerState:
    kind: str = "sgd"
    lr: float = 0.03
    momentum: float = 0.9
    nesterov: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    buffers: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def init_optimizer(params, kind="sgd", **hyper):
    state = OptimizerState(kind=kind, **hyper)
    arrays = _flat(params)
    n_slots = 1 if kind == "sgd" else 2
    state.buffers = [[np.zeros_like(a) for a in arrays] for _ in range(n_slots)]
    return state


def optimizer_step(state, params, grads):
    """Apply one update. Returns ``(new_params, new_state)``; inputs are not mutated."""
    p_arrays = _flat(params)
    g_arrays = _flat(grads)
    if len(p_arrays) != len(g_arrays):
        raise ValueError("parameter and gradient lists differ in length")
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient")
    for slot in state.buffers:
        for p, b in zip(p_arrays, slot):
            if p.shape != b.shape:
                raise ValueError("optimizer accumulator shape does not match parameter")

    step = state.step + 1
    new_params, new_buffers = [], [[] for _ in state.buffers]
    wd = state.weight_decay

    if state.kind == "sgd":
        mu = state.momentum
        for p, g, v in zip(p_arrays, g_arrays, state.buffers[0]):
            if wd:
                g = g + wd * p
            v = mu * v + g
            d = g + mu * v if state.nesterov else v
            new_params.append(p - state.lr * d)
            new_buffers[0].append(v)
    else:
        b1, b2 = state.beta1, state.beta2
        c1 = 1.0 - b1**step
        c2 = 1.0 - b2**step
        for p, g, m, v in zip(p_arrays, g_arrays, *state.buffers):
            if wd:
                g = g + wd * p
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + state.eps)
            new_params.append(p - state.lr * update)
            new_buffers[0].append(m)
            new_buffers[1].append(v)

    new_state = OptimizerState(
        kind=state.kind, lr=state.lr, momentum=state.momentum, nesterov=state.nesterov,
        beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        weight_decay=state.weight_decay, step=step, buffers=new_buffers,
    )
    if isinstance(params, MlpParams):
        new_params = MlpParams.from_arrays(new_params, params.activation)
    return new_params, new_state


def ema_update(avg, new, m):
    """``m * avg + (1 - m) * new``; works on arrays or on whole ``MlpParams``."""
    if not 0.0 <= m < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {m}")
    if isinstance(avg, MlpParams):
        out = [ema_update(a, n, m) for a, n in zip(avg.arrays(), new.arrays())]
        return MlpParams.from_arrays(out, avg.activation)
    avg = np.asarray(avg)
    new = np.asarray(new)
    if avg.shape != new.shape:
        raise ValueError(f"shape mismatch: {avg.shape} vs {new.shape}")
    return m * avg + (1.0 - m) * new
