"""Pseudo-labeling decisions from weak-view logits.

Three interchangeable criteria share one record type:

* ``confidence`` accepts when the max softmax probability reaches ``tau_c``.
* ``energy`` accepts when the energy score falls strictly below ``tau_e``.
* ``soft`` gates on confidence like ``confidence`` and also attaches a
  sharpened soft target.

``tau_e`` can be fixed, or re-derived each step as a quantile of the energies
of the current labeled batch (``tau_e_mode="labeled_quantile"``), which keeps
the threshold on the scale of the network actually being trained.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .scoring import energy, sharpen, softmax_confidence

KINDS = ("confidence", "energy", "soft")
TAU_E_MODES = ("fixed", "labeled_quantile")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "energy"
    tau_c: float = 0.95
    tau_e: float = -9.5
    T: float = 1.0
    T_s: float = 0.4
    tau_e_mode: str = "labeled_quantile"
    tau_e_quantile: float = 0.7

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        # tau_c > 1 is permitted: it is the reject-everything setting
        if self.kind in ("confidence", "soft") and not 0.0 < self.tau_c:
            raise ValueError(f"tau_c must be positive, got {self.tau_c}")
        if self.kind == "energy":
            if self.tau_e_mode not in TAU_E_MODES:
                raise ValueError(f"unknown tau_e_mode {self.tau_e_mode!r}")
            if np.isnan(self.tau_e):
                raise ValueError("tau_e is NaN")
            if not 0.0 <= self.tau_e_quantile <= 1.0:
                raise ValueError("tau_e_quantile must lie in [0, 1]")
        if not self.T > 0:
            raise ValueError(f"energy temperature must be positive, got {self.T}")
        if self.kind == "soft" and not self.T_s > 0:
            raise ValueError(f"sharpening temperature must be positive, got {self.T_s}")
        return self


@dataclass
class PseudoLabelDecision:
    accepted: bool
    hard_label: int
    confidence: float
    energy: float
    soft_target: Optional[np.ndarray] = None


@dataclass
class BatchDecisions:
    """Column-wise decisions for a batch; row ``i`` is one unlabeled sample."""

    accepted: np.ndarray
    hard_label: np.ndarray
    confidence: np.ndarray
    energy: np.ndarray
    soft_target: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.accepted)

    def __getitem__(self, i):
        return PseudoLabelDecision(
            accepted=bool(self.accepted[i]),
            hard_label=int(self.hard_label[i]),
            confidence=float(self.confidence[i]),
            energy=float(self.energy[i]),
            soft_target=None if self.soft_target is None else self.soft_target[i],
        )


def resolve_tau_e(cfg, labeled_logits=None):
    """Return ``cfg`` with a concrete ``tau_e`` for this step."""
    if cfg.kind != "energy" or cfg.tau_e_mode == "fixed":
        return cfg
    if labeled_logits is None or len(labeled_logits) == 0:
        raise ValueError("labeled_quantile mode needs labeled logits")
    ref = energy(labeled_logits, cfg.T)
    return replace(cfg, tau_e=float(np.quantile(ref, cfg.tau_e_quantile)), tau_e_mode="fixed")


def decide_batch(logits, cfg):
    cfg.validate()
    if cfg.kind == "energy" and cfg.tau_e_mode != "fixed":
        raise ValueError("resolve the energy threshold with resolve_tau_e first")
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    probs, conf, label = softmax_confidence(logits)
    e = energy(logits, cfg.T)
    if cfg.kind == "energy":
        accepted = e < cfg.tau_e
    else:
        accepted = conf >= cfg.tau_c
    soft = sharpen(probs, cfg.T_s) if cfg.kind == "soft" else None
    return BatchDecisions(accepted, label, conf, e, soft)


def decide(logits, cfg):
    """Decision for one logit vector."""
    return decide_batch(np.asarray(logits, dtype=float)[None, :], cfg)[0]
