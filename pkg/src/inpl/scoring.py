"""Score functions over logits: energy, softmax confidence, sharpening.

All functions accept a single logit vector ``(K,)`` or a batch ``(n, K)``
and reduce over the last axis.
"""

from __future__ import annotations

import numpy as np

from .numerics import logsumexp


def energy(logits, T=1.0):
    """Free energy ``-T * log(sum_i exp(f_i / T))``; lower means more in-distribution."""
    logits = np.asarray(logits, dtype=float)
    return -logsumexp(logits, T=T, axis=-1)


def softmax(logits):
    logits = np.asarray(logits, dtype=float)
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_confidence(logits):
    """Return ``(probs, max_prob, argmax)``; ties go to the lowest class index."""
    probs = softmax(logits)
    # np.argmax already returns the first maximal index
    label = np.argmax(probs, axis=-1)
    conf = np.take_along_axis(probs, np.expand_dims(label, -1), axis=-1)[..., 0]
    if probs.ndim == 1:
        return probs, float(conf), int(label)
    return probs, conf, label


def sharpen(p, T_s):
    """Raise ``p`` to ``1/T_s`` and renormalise (done in log space)."""
    if not T_s > 0:
        raise ValueError(f"sharpening temperature must be positive, got {T_s}")
    p = np.asarray(p, dtype=float)
    if T_s == 1.0:
        return p.copy()
    with np.errstate(divide="ignore"):
        logp = np.log(p) / T_s
    return softmax(logp)


def decoupling_residual(logits):
    """``|log max softmax - (energy(., 1) + max logit)|``; zero up to rounding."""
    logits = np.asarray(logits, dtype=float)
    _, conf, _ = softmax_confidence(logits)
    lhs = np.log(conf)
    rhs = energy(logits, 1.0) + logits.max(axis=-1)
    return np.abs(lhs - rhs)
