"""Supervised / unsupervised losses, adaptive margins and the class-prior tracker.

Loss functions accept either numpy arrays (and return floats) or
:class:`~inpl.numerics.Tensor` logits (and return scalar Tensors so the
trainer can backpropagate through them).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import Tensor

PRIOR_FLOOR = 1e-6


def _as_tensor(logits):
    if isinstance(logits, Tensor):
        return logits, True
    return Tensor(np.atleast_2d(np.asarray(logits, dtype=float))), False


def _out(t, keep):
    return t if keep else float(t.data)


def cross_entropy_rows(logits, labels):
    """Per-row ``logsumexp(f) - f[label]`` as a Tensor of shape ``(n,)``."""
    return logits.logsumexp(axis=-1) - logits.take_rows(labels)


def soft_cross_entropy_rows(logits, targets):
    return logits.logsumexp(axis=-1) - (logits * Tensor(targets)).sum(axis=-1)


def supervised_loss(logits, labels):
    """Mean cross-entropy over a labeled batch."""
    t, keep = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if t.shape[0] == 0:
        raise ValueError("supervised loss of an empty batch")
    if labels.shape != (t.shape[0],):
        raise ValueError("labels do not align with logits")
    if labels.min() < 0 or labels.max() >= t.shape[1]:
        raise ValueError("label out of range")
    return _out(cross_entropy_rows(t, labels).mean(), keep)


@dataclass(frozen=True)
class PriorTracker:
    """EMA of the model's mean predicted class distribution."""

    p: np.ndarray
    momentum: float = 0.999
    lambda_m: float = 0.5

    @classmethod
    def uniform(cls, K, momentum=0.999, lambda_m=0.5):
        return cls(np.full(K, 1.0 / K), momentum, lambda_m)


def margins(tracker):
    """``lambda_m * log(1 / p~)`` per class."""
    p = np.asarray(tracker.p, dtype=float)
    if np.any(p <= 0):
        raise ValueError("class prior has a non-positive entry")
    return tracker.lambda_m * -np.log(p)


def update_prior(tracker, probs):
    """One EMA step toward the batch-mean prediction, floored and renormalised."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2 or probs.shape[0] == 0:
        return tracker
    m = tracker.momentum
    p = m * tracker.p + (1.0 - m) * probs.mean(axis=0)
    p = np.maximum(p, PRIOR_FLOOR)
    return replace(tracker, p=p / p.sum())


def unsupervised_loss(strong_logits, decisions, variant="ce", delta=None):
    """Masked consistency loss, normalised by the full unlabeled batch size.

    With ``variant="aml"`` the strong-view logits are shifted by ``-delta``
    before the cross-entropy, i.e. the adaptive margin loss. Soft targets on
    ``decisions`` (``soft`` policy) replace the one-hot pseudo-label.
    """
    t, keep = _as_tensor(strong_logits)
    n = len(decisions)
    if t.shape[0] != n:
        raise ValueError(f"{t.shape[0]} strong-view rows for {n} decisions")
    if n == 0:
        raise ValueError("unsupervised loss of an empty batch")
    if variant == "aml":
        if delta is None:
            raise ValueError("aml variant needs margins")
        t = t - Tensor(np.asarray(delta, dtype=t.dtype))
    elif variant != "ce":
        raise ValueError(f"unknown loss variant {variant!r}")

    mask = np.asarray(decisions.accepted, dtype=t.dtype)
    if not mask.any():
        zero = Tensor(np.zeros((), dtype=t.dtype))
        return _out(zero, keep)
    if decisions.soft_target is not None:
        rows = soft_cross_entropy_rows(t, decisions.soft_target.astype(t.dtype))
    else:
        rows = cross_entropy_rows(t, decisions.hard_label)
    return _out((rows * Tensor(mask)).sum() * (1.0 / n), keep)


def total_loss(loss_s, loss_u, lambda_u=1.0):
    return loss_s + loss_u * lambda_u
