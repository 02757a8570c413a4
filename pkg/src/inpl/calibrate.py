"""Matching an energy threshold to a confidence baseline's acceptance rate.

Comparisons between the two gates are only fair at equal acceptance. The
energy run's model at the matching iteration depends on its own threshold,
so the threshold is found by fixed-point iteration: train to the iteration,
take the quantile of in-distribution pool energies that gives the target
rate, retrain with that threshold, repeat.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import mlp_forward
from .policy import decide_batch
from .scoring import energy
from .trainer import _pool_policy, run


@dataclass
class Calibration:
    value: float  # tau_e or the labeled quantile, depending on the search
    target_rate: float
    achieved_rate: float
    history: list  # (probe value, achieved rate) per round


def pool_accept_rate(cfg, ds, state):
    """In-distribution pool acceptance of the live model in ``state``."""
    policy = _pool_policy(cfg, state, ds.labeled_x.astype(cfg.dtype))
    dec = decide_batch(mlp_forward(state.params, ds.unlabeled_x.astype(cfg.dtype)), policy)
    in_dist = ~ds.unlabeled_ood
    return float(dec.accepted[in_dist].mean())


def acceptance_at(cfg, ds, iteration):
    _, state = run(cfg, ds, stop_at=iteration)
    return pool_accept_rate(cfg, ds, state)


def match_energy_threshold(cfg, ds, target_rate, iteration, rounds=4, tau_e=None):
    """Fixed ``tau_e`` whose run accepts ``target_rate`` of the pool at ``iteration``.

    ``cfg`` should use the energy gate; its threshold mode is switched to
    fixed. The starting threshold defaults to the matching quantile under the
    untrained model.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError(f"target rate must lie in (0, 1), got {target_rate}")
    in_dist = ~ds.unlabeled_ood
    x = ds.unlabeled_x[in_dist].astype(cfg.dtype)
    history = []
    state = None
    for _ in range(rounds + 1):
        if tau_e is not None:
            cur = replace(cfg, policy=replace(cfg.policy, kind="energy", tau_e_mode="fixed", tau_e=tau_e))
            _, state = run(cur, ds, stop_at=iteration)
            history.append((tau_e, pool_accept_rate(cur, ds, state)))
        elif state is None:
            cur = replace(cfg, iterations=0)
            _, state = run(cur, ds)
        e = energy(mlp_forward(state.params, x), cfg.policy.T)
        tau_e = float(np.quantile(e, target_rate))
    best = min(history, key=lambda h: abs(h[1] - target_rate))
    return Calibration(best[0], target_rate, best[1], history)


def match_energy_quantile(cfg, ds, target_rate, iteration, tol=0.01, max_rounds=12):
    """Labeled-quantile ``q`` whose run accepts ``target_rate`` of the pool at ``iteration``.

    Bisection on ``q``; acceptance at a fixed iteration is close to monotone
    in ``q`` but not exactly, so the closest probe is returned.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError(f"target rate must lie in (0, 1), got {target_rate}")
    lo, hi = 0.0, 1.0
    history = []
    for _ in range(max_rounds):
        q = 0.5 * (lo + hi)
        cur = replace(cfg, policy=replace(cfg.policy, kind="energy", tau_e_mode="labeled_quantile",
                                          tau_e_quantile=q))
        rate = acceptance_at(cur, ds, iteration)
        history.append((q, rate))
        if abs(rate - target_rate) <= tol:
            break
        if rate < target_rate:
            lo = q
        else:
            hi = q
    best = min(history, key=lambda h: abs(h[1] - target_rate))
    return Calibration(best[0], target_rate, best[1], history)
