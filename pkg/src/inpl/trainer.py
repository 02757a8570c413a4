"""FixMatch-style training loop with pluggable pseudo-labeling policies.

One step:

1. weak views of the labeled batch and the unlabeled batch, ``strong_views``
   strong views of the unlabeled batch;
2. pseudo-label decisions from the live model's logits on the unlabeled weak
   views;
3. ``L = L_s + lambda_u * L_u`` with ``L_u`` averaged over strong views;
4. one optimizer step, then the EMA evaluation model and class-prior tracker
   are advanced.

The step function sees only features and labeled targets. Hidden labels of
the unlabeled pool stay inside :class:`~inpl.metrics.PseudoLabelMonitor`.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import losses
from .data import AugmentConfig, augment
from .metrics import (
    GroupSpec,
    PseudoLabelMonitor,
    accuracy_report,
    minority_classes,
)
from .numerics import (
    NonFiniteError,
    init_mlp,
    init_optimizer,
    mlp_forward,
    mlp_forward_tensor,
    optimizer_step,
    value_and_grad,
    ema_update,
)
from .policy import PolicyConfig, decide_batch, resolve_tau_e
from .scoring import softmax

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.03
    momentum: float = 0.9
    nesterov: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 3e-3

    def hyper(self):
        d = asdict(self)
        kind = d.pop("kind")
        if kind == "sgd":
            for k in ("beta1", "beta2", "eps"):
                d.pop(k)
        else:
            for k in ("momentum", "nesterov"):
                d.pop(k)
        return kind, d


@dataclass
class TrainConfig:
    iterations: int = 5000
    batch_labeled: int = 64
    batch_unlabeled: int = 64
    strong_views: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    loss_variant: str = "ce"
    lambda_u: float = 1.0
    lambda_m: float = 0.5
    prior_momentum: float = 0.999
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    ema_momentum: float = 0.999
    eval_interval: int = 250
    seed: int = 0
    hidden: tuple = (64, 64)
    dtype: str = "float32"
    supervised_only: bool = False
    minority_fraction: float = 0.5
    group_head: Optional[int] = None
    group_tail: Optional[int] = None

    def validate(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.strong_views < 1:
            raise ValueError("need at least one strong view")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if self.loss_variant not in ("ce", "aml"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ValueError("ema_momentum must lie in [0, 1)")
        self.policy.validate()
        self.augment.validate()
        return self

    def groups(self, K):
        g = GroupSpec.default_for(K)
        return GroupSpec(
            g.head if self.group_head is None else self.group_head,
            g.tail if self.group_tail is None else self.group_tail,
        )


class EpochSampler:
    """Reshuffles every pass; a batch may straddle two permutations."""

    def __init__(self, n, rng):
        if n < 1:
            raise ValueError("cannot sample from an empty split")
        self.n = n
        self.rng = rng
        self.perm = rng.permutation(n)
        self.pos = 0

    def next(self, size):
        out = []
        while size > 0:
            if self.pos == self.n:
                self.perm = self.rng.permutation(self.n)
                self.pos = 0
            take = min(size, self.n - self.pos)
            out.append(self.perm[self.pos : self.pos + take])
            self.pos += take
            size -= take
        return np.concatenate(out)


@dataclass
class TrainState:
    iteration: int
    params: object
    opt: object
    ema: object
    prior: losses.PriorTracker
    rngs: dict  # name -> np.random.Generator
    samplers: dict  # name -> EpochSampler
    ood_cum: int = 0
    loss_sums: list = field(default_factory=lambda: [0.0, 0.0, 0])
    records: list = field(default_factory=list)


@dataclass
class StepRecord:
    iteration: int
    loss_s: float
    loss_u: float
    tau_e: Optional[float]
    unlabeled_index: np.ndarray
    accepted: np.ndarray
    hard_label: np.ndarray
    confidence: np.ndarray
    energy: np.ndarray

    @property
    def accept_rate(self):
        return float(self.accepted.mean()) if len(self.accepted) else 0.0


class TrainingDiverged(RuntimeError):
    def __init__(self, message, metrics):
        super().__init__(message)
        self.metrics = metrics


@dataclass
class RunMetrics:
    records: list
    K: int

    def final(self):
        return self.records[-1]

    def column(self, name):
        return [r[name] for r in self.records]


def init_state(cfg, dim, K, n_labeled, n_unlabeled):
    cfg.validate()
    dtype = np.dtype(cfg.dtype)
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    names = ("init", "sample_l", "sample_u", "aug_l", "aug_u", "spare")
    rngs = {n: np.random.default_rng(s) for n, s in zip(names, seeds)}
    params = init_mlp([dim, *cfg.hidden, K], rngs["init"], dtype=dtype)
    kind, hyper = cfg.optimizer.hyper()
    opt = init_optimizer(params, kind, **hyper)
    samplers = {"l": EpochSampler(n_labeled, rngs["sample_l"])}
    if not cfg.supervised_only:
        samplers["u"] = EpochSampler(n_unlabeled, rngs["sample_u"])
    prior = losses.PriorTracker.uniform(K, cfg.prior_momentum, cfg.lambda_m)
    return TrainState(0, params, opt, params.copy(), prior, rngs, samplers)


def train_step(state, cfg, labeled_x, labeled_y, unlabeled_x=None, unlabeled_index=None):
    """One optimisation step; returns ``(new_state, StepRecord)``.

    ``state`` is not mutated except for the RNG streams it owns.
    """
    dtype = np.dtype(cfg.dtype)
    rng_l, rng_u = state.rngs["aug_l"], state.rngs["aug_u"]
    xl = augment(labeled_x, "weak", cfg.augment, rng_l).astype(dtype)
    yl = np.asarray(labeled_y, dtype=np.int64)

    use_u = unlabeled_x is not None and not cfg.supervised_only
    prior = state.prior
    decisions = None
    strong = []
    policy = cfg.policy
    if use_u:
        xu_w = augment(unlabeled_x, "weak", cfg.augment, rng_u).astype(dtype)
        strong = [
            augment(unlabeled_x, "strong", cfg.augment, rng_u).astype(dtype)
            for _ in range(cfg.strong_views)
        ]
        weak_logits = mlp_forward(state.params, xu_w)
        if not np.all(np.isfinite(weak_logits)):
            raise NonFiniteError("non-finite unlabeled logits")
        if policy.kind == "energy" and policy.tau_e_mode != "fixed":
            ref = mlp_forward(state.params, xl)
            if not np.all(np.isfinite(ref)):
                raise NonFiniteError("non-finite labeled logits")
            policy = resolve_tau_e(policy, ref)
        decisions = decide_batch(weak_logits, policy)
        prior = losses.update_prior(prior, softmax(weak_logits))
    delta = losses.margins(prior).astype(dtype) if cfg.loss_variant == "aml" else None

    parts = {}

    def objective(w):
        l_s = losses.supervised_loss(mlp_forward_tensor(w, xl), yl)
        parts["s"] = float(l_s.data)
        if not use_u:
            parts["u"] = 0.0
            return l_s
        l_u = None
        for xs in strong:
            term = losses.unsupervised_loss(
                mlp_forward_tensor(w, xs), decisions, cfg.loss_variant, delta
            )
            l_u = term if l_u is None else l_u + term
        if len(strong) > 1:
            l_u = l_u * (1.0 / len(strong))
        parts["u"] = float(l_u.data)
        return losses.total_loss(l_s, l_u, cfg.lambda_u)

    _, grads = value_and_grad(objective, state.params)
    params, opt = optimizer_step(state.opt, state.params, grads)
    ema = ema_update(state.ema, params, cfg.ema_momentum)

    new = copy.copy(state)
    new.iteration = state.iteration + 1
    new.params, new.opt, new.ema, new.prior = params, opt, ema, prior
    n_u = 0 if decisions is None else len(decisions)
    empty_f = np.zeros(0)
    record = StepRecord(
        iteration=new.iteration,
        loss_s=parts["s"],
        loss_u=parts["u"],
        tau_e=policy.tau_e if policy.kind == "energy" else None,
        unlabeled_index=np.zeros(0, dtype=np.int64) if unlabeled_index is None else unlabeled_index,
        accepted=np.zeros(n_u, dtype=bool) if decisions is None else decisions.accepted,
        hard_label=np.zeros(n_u, dtype=np.int64) if decisions is None else decisions.hard_label,
        confidence=empty_f if decisions is None else decisions.confidence,
        energy=empty_f if decisions is None else decisions.energy,
    )
    return new, record


def evaluate(params, x, y, minority):
    """Accuracy report of ``params`` on a (balanced) test split."""
    if len(y) == 0:
        raise ValueError("empty test set")
    return accuracy_report(mlp_forward(params, x), y, minority)


def _pool_policy(cfg, state, labeled_x):
    policy = cfg.policy
    if policy.kind == "energy" and policy.tau_e_mode != "fixed":
        policy = resolve_tau_e(policy, mlp_forward(state.params, labeled_x))
    return policy


def _eval_record(state, cfg, ds, monitor, minority, groups):
    sums = state.loss_sums
    n = sums[2]
    policy = _pool_policy(cfg, state, ds.labeled_x.astype(cfg.dtype))
    pool_logits = mlp_forward(state.params, ds.unlabeled_x.astype(cfg.dtype))
    decisions = decide_batch(pool_logits, policy)
    rec = {
        "iteration": state.iteration,
        "loss_s": sums[0] / n if n else None,
        "loss_u": sums[1] / n if n else None,
        "tau_e": policy.tau_e if policy.kind == "energy" else None,
    }
    rec.update(monitor.pool_summary(decisions, groups))
    rec["ood_accepted_cum"] = state.ood_cum
    report = evaluate(state.ema, ds.test_x.astype(cfg.dtype), ds.test_y, minority)
    rec["test_acc"] = report.accuracy
    rec["minority_acc"] = report.minority_accuracy
    rec["acc_per_class"] = [float(a) for a in report.per_class]
    return rec


def run(cfg, ds, state=None, stop_at=None):
    """Train on ``ds`` and return ``(RunMetrics, final TrainState)``.

    ``state`` resumes from a checkpointed state; ``stop_at`` halts early at an
    iteration (used to take checkpoints mid-run).
    """
    cfg.validate()
    K = ds.K
    if state is None:
        state = init_state(cfg, ds.dim, K, len(ds.labeled_y), len(ds.unlabeled_y))
    monitor = PseudoLabelMonitor(ds.unlabeled_y, K, ds.labeled_counts)
    groups = cfg.groups(K)
    minority = minority_classes(ds.labeled_counts, cfg.minority_fraction)
    end = cfg.iterations if stop_at is None else min(stop_at, cfg.iterations)

    if state.iteration == 0 and not state.records:
        state.records.append(_eval_record(state, cfg, ds, monitor, minority, groups))

    lx, ly, ux = ds.labeled_x, ds.labeled_y, ds.unlabeled_x
    while state.iteration < end:
        li = state.samplers["l"].next(cfg.batch_labeled)
        if cfg.supervised_only:
            ui, ubatch = None, None
        else:
            ui = state.samplers["u"].next(cfg.batch_unlabeled)
            ubatch = ux[ui]
        try:
            state, step = train_step(state, cfg, lx[li], ly[li], ubatch, ui)
        except NonFiniteError as exc:
            metrics = RunMetrics(list(state.records), K)
            raise TrainingDiverged(
                f"non-finite value at iteration {state.iteration + 1}: {exc}", metrics
            ) from exc
        state.ood_cum += monitor.ood_in_batch(step.unlabeled_index, step.accepted)
        state.loss_sums = [
            state.loss_sums[0] + step.loss_s,
            state.loss_sums[1] + step.loss_u,
            state.loss_sums[2] + 1,
        ]
        if state.iteration % cfg.eval_interval == 0 or state.iteration == cfg.iterations:
            state.records.append(_eval_record(state, cfg, ds, monitor, minority, groups))
            state.loss_sums = [0.0, 0.0, 0]
            last = state.records[-1]
            log.debug(
                "iter %d  acc %.4f  accept %.3f", last["iteration"], last["test_acc"],
                last["accept_rate"] or 0.0,
            )
    return RunMetrics(list(state.records), K), state


def train(cfg, ds):
    """Full run; returns :class:`RunMetrics`."""
    return run(cfg, ds)[0]


def with_policy(cfg, **changes):
    """Copy of ``cfg`` with policy fields replaced."""
    return replace(cfg, policy=replace(cfg.policy, **changes))
