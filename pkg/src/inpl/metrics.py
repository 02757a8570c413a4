"""Pseudo-label precision/recall by class and class group, OOD counting, accuracy.

Undefined precisions (a class that received no pseudo-labels) are ``None``
rather than 0 or 1 so that curves over training do not get silent fake
points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import OOD_LABEL


def _ratio(num, den):
    return None if den == 0 else num / den


@dataclass
class PRReport:
    """Raw per-class counts plus the derived rates."""

    true_pos: np.ndarray  # correct pseudo-labels per predicted class
    accepted: np.ndarray  # pseudo-labels per predicted class (incl. OOD)
    support: np.ndarray  # in-distribution unlabeled samples per true class

    @property
    def K(self):
        return len(self.support)

    @property
    def precision(self):
        return [_ratio(int(t), int(a)) for t, a in zip(self.true_pos, self.accepted)]

    @property
    def recall(self):
        # a class with no unlabeled samples has nothing to recall
        return [0.0 if s == 0 else int(t) / int(s) for t, s in zip(self.true_pos, self.support)]

    @property
    def micro_precision(self):
        return _ratio(int(self.true_pos.sum()), int(self.accepted.sum()))

    @property
    def accept_rate(self):
        total = int(self.support.sum())
        return _ratio(int(self.accepted.sum()), total)


def pseudo_label_pr(decisions, true_labels, K=None):
    """Score accepted pseudo-labels against hidden labels.

    ``decisions`` needs ``accepted`` and ``hard_label`` columns. Samples whose
    true label is ``OOD_LABEL`` never count toward a recall denominator; when
    accepted they are false positives for the class they were assigned.
    """
    accepted = np.asarray(decisions.accepted, dtype=bool)
    pred = np.asarray(decisions.hard_label, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if not (len(accepted) == len(pred) == len(true)):
        raise ValueError("decisions and labels are misaligned")
    if K is None:
        K = int(max(pred.max(initial=-1), true.max(initial=-1))) + 1
    in_dist = true != OOD_LABEL
    support = np.bincount(true[in_dist], minlength=K)
    acc = np.bincount(pred[accepted], minlength=K)
    tp = np.bincount(pred[accepted & (pred == true)], minlength=K)
    return PRReport(tp, acc, support)


@dataclass(frozen=True)
class GroupSpec:
    head: int = 3
    tail: int = 3

    @classmethod
    def default_for(cls, K):
        """(3, 3) at K=10, scaled to 30% of the classes otherwise (at least one)."""
        size = max(1, int(np.floor(0.3 * K + 0.5)))
        return cls(size, size)


def group_partition(labeled_counts, g):
    """Classes ranked by labeled count (desc, ties by index) split into head/body/tail."""
    counts = np.asarray(labeled_counts)
    K = len(counts)
    if g.head < 0 or g.tail < 0 or g.head + g.tail > K:
        raise ValueError(f"group sizes {g.head}+{g.tail} do not fit K={K}")
    order = sorted(range(K), key=lambda c: (-counts[c], c))
    return {
        "head": order[: g.head],
        "body": order[g.head : K - g.tail],
        "tail": order[K - g.tail :],
    }


@dataclass
class GroupPR:
    precision: Optional[float]
    recall: Optional[float]
    classes: list


def group_summary(report, labeled_counts, g):
    """Pool counts inside each frequency group (micro-average within the group)."""
    out = {}
    for name, classes in group_partition(labeled_counts, g).items():
        idx = np.asarray(classes, dtype=np.int64)
        tp = int(report.true_pos[idx].sum())
        acc = int(report.accepted[idx].sum())
        sup = int(report.support[idx].sum())
        out[name] = GroupPR(_ratio(tp, acc), _ratio(tp, sup), list(classes))
    return out


def ood_acceptance_count(decisions, ood_flags):
    accepted = np.asarray(decisions.accepted, dtype=bool)
    flags = np.asarray(ood_flags, dtype=bool)
    if accepted.shape != flags.shape:
        raise ValueError("decisions and OOD flags are misaligned")
    return int((accepted & flags).sum())


@dataclass
class EvalReport:
    accuracy: float
    per_class: np.ndarray
    minority_accuracy: float


def minority_classes(labeled_counts, fraction=0.5):
    """The least frequent ``floor(fraction * K)`` classes (at least one)."""
    counts = np.asarray(labeled_counts)
    K = len(counts)
    n = max(1, int(np.floor(fraction * K)))
    order = sorted(range(K), key=lambda c: (-counts[c], c))
    return order[K - n :]


def accuracy_report(logits, labels, minority):
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty test set")
    K = logits.shape[1]
    pred = np.argmax(logits, axis=1)
    hit = pred == labels
    per_class = np.array(
        [hit[labels == c].mean() if np.any(labels == c) else np.nan for c in range(K)]
    )
    minority_acc = float(np.nanmean(per_class[list(minority)]))
    return EvalReport(float(hit.mean()), per_class, minority_acc)


class PseudoLabelMonitor:
    """Holds the hidden labels of the unlabeled pool; the trainer only hands it decisions."""

    def __init__(self, hidden_labels, K, labeled_counts):
        self._labels = np.asarray(hidden_labels, dtype=np.int64)
        self._ood = self._labels == OOD_LABEL
        self.K = K
        self.labeled_counts = np.asarray(labeled_counts)

    def ood_in_batch(self, index, accepted):
        if len(index) == 0:
            return 0
        return int((self._ood[index] & np.asarray(accepted, dtype=bool)).sum())

    def pool_summary(self, decisions, groups):
        """Flat dict of diagnostics for decisions over the whole unlabeled pool."""
        report = pseudo_label_pr(decisions, self._labels, self.K)
        in_dist = ~self._ood
        n_in = int(in_dist.sum())
        accepted = np.asarray(decisions.accepted, dtype=bool)
        out = {
            "accept_rate": float(accepted[in_dist].sum() / n_in) if n_in else None,
            "micro_precision": report.micro_precision,
            "ood_accepted": ood_acceptance_count(decisions, self._ood),
        }
        for name, gpr in group_summary(report, self.labeled_counts, groups).items():
            out[f"{name}_precision"] = gpr.precision
            out[f"{name}_recall"] = gpr.recall
        out["precision_per_class"] = report.precision
        out["recall_per_class"] = report.recall
        return out
