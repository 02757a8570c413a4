"""Synthetic long-tailed SSL splits drawn from Gaussian class mixtures.

Per-class counts follow the exponential profile
``N_k = N_1 * gamma ** (-(k - 1) / (K - 1))``. Two unlabeled-count modes are
supported:

* ``"dual"`` applies the same profile to the unlabeled set starting at ``M1``;
* ``"complement"`` gives every class ``D`` samples in total, so
  ``M_k = D - N_k``.

Unlabeled samples keep their true class in :attr:`SSLDataset.unlabeled_y`
for diagnostics only; OOD samples carry ``OOD_LABEL`` there and ``True`` in
``unlabeled_ood``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

OOD_LABEL = -1


@dataclass(frozen=True)
class LongTailSpec:
    K: int = 5
    gamma: float = 10.0
    N1: int = 100
    mode: str = "dual"
    M1: Optional[int] = 1000
    D: Optional[int] = None

    def validate(self):
        if self.K < 2:
            raise ValueError(f"need at least two classes, got K={self.K}")
        if self.gamma < 1:
            raise ValueError(f"imbalance ratio must be >= 1, got {self.gamma}")
        if self.N1 < 1:
            raise ValueError(f"N1 must be >= 1, got {self.N1}")
        if self.mode == "dual":
            if self.M1 is None or self.M1 < 0:
                raise ValueError("dual mode needs a non-negative M1")
        elif self.mode == "complement":
            if self.D is None:
                raise ValueError("complement mode needs D")
            if self.D < self.N1:
                raise ValueError(f"D={self.D} is smaller than N1={self.N1}")
        else:
            raise ValueError(f"unknown long-tail mode {self.mode!r}")
        return self


def _profile(first, gamma, K):
    k = np.arange(K)
    raw = first * np.power(float(gamma), -k / (K - 1))
    # round half up; np.round would send 0.5 to even
    return np.maximum(np.floor(raw + 0.5).astype(np.int64), 1)


def longtail_counts(spec):
    """Return ``(labeled_counts, unlabeled_counts)`` as int arrays of length K."""
    spec.validate()
    n = _profile(spec.N1, spec.gamma, spec.K)
    if spec.mode == "dual":
        if spec.M1 == 0:
            m = np.zeros(spec.K, dtype=np.int64)
        else:
            m = _profile(spec.M1, spec.gamma, spec.K)
    else:
        m = spec.D - n
        if np.any(m < 0):
            raise ValueError("D is smaller than some labeled count")
    return n, m


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian per class: ``x ~ N(means[k], scales[k]^2 I)``."""

    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        scales = np.broadcast_to(np.asarray(self.scales, dtype=float), (means.shape[0],)).copy()
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.means.shape[0]

    def validate(self):
        if self.dim < 2:
            raise ValueError(f"feature dimension must be >= 2, got {self.dim}")
        if np.any(self.scales <= 0):
            raise ValueError("covariance scales must be positive")
        return self

    def to_dict(self):
        return {"means": self.means.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"], dtype=float), np.asarray(d["scales"], dtype=float))


def class_means(K, dim=2, radius=3.0):
    """Means on a circle (``dim == 2``) or on scaled simplex vertices.

    Simplex vertices are the centred standard basis of R^K rotated into the
    first K-1 coordinates, so they need ``dim >= K - 1``; for smaller ``dim``
    the circle is used in the first two coordinates.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    means = np.zeros((K, dim))
    if dim == 2 or dim < K - 1:
        angles = 2 * np.pi * np.arange(K) / K
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
        return means
    centred = np.eye(K) - 1.0 / K
    # orthonormal basis of the (K-1)-dim subspace the centred vertices span
    u, _, _ = np.linalg.svd(centred)
    coords = centred @ u[:, : K - 1]
    coords *= radius / np.linalg.norm(coords[0])
    means[:, : K - 1] = coords
    return means


def default_mixture(K, dim=2, radius=3.0, scale=1.0):
    return MixtureSpec(class_means(K, dim, radius), np.full(K, scale))


def default_ood_mixture(K, dim=2, radius=3.0, scale=0.5, n_components=None, distance=1.0):
    """Outlier clusters at the angular midpoints between class means.

    They sit at ``distance * radius`` from the origin. The default of 1.0 puts
    them on the class-mean circle, like extra classes that have no labels.
    """
    n = K if n_components is None else n_components
    angles = 2 * np.pi * (np.arange(n) + 0.5) / n
    means = np.zeros((n, dim))
    means[:, 0] = distance * radius * np.cos(angles)
    means[:, 1] = distance * radius * np.sin(angles)
    return MixtureSpec(means, np.full(n, scale))


@dataclass
class SSLDataset:
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    unlabeled_y: np.ndarray  # hidden; OOD_LABEL for outliers
    test_x: np.ndarray
    test_y: np.ndarray
    K: int
    labeled_counts: np.ndarray
    unlabeled_counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def unlabeled_ood(self):
        return self.unlabeled_y == OOD_LABEL

    @property
    def dim(self):
        return self.labeled_x.shape[1]

    def counts(self):
        return {
            "labeled": self.labeled_counts.tolist(),
            "unlabeled": self.unlabeled_counts.tolist(),
            "test": np.bincount(self.test_y, minlength=self.K).tolist(),
            "ood": int(self.unlabeled_ood.sum()),
        }


def _class_streams(seed, n_streams):
    # one independent generator per (split, class) so output does not depend on
    # generation order
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_streams)]


def _draw(rng, mean, scale, n):
    return mean + scale * rng.standard_normal((n, mean.shape[0]))


def make_dataset(lt, mix, seed=0, test_per_class=200):
    lt.validate()
    mix.validate()
    if mix.n_components != lt.K:
        raise ValueError(f"mixture has {mix.n_components} components for K={lt.K}")
    n, m = longtail_counts(lt)
    K = lt.K
    streams = _class_streams(seed, 3 * K)
    parts = {"labeled": ([], []), "unlabeled": ([], []), "test": ([], [])}
    for k in range(K):
        for j, (name, cnt) in enumerate(
            (("labeled", n[k]), ("unlabeled", m[k]), ("test", test_per_class))
        ):
            xs, ys = parts[name]
            xs.append(_draw(streams[3 * k + j], mix.means[k], mix.scales[k], int(cnt)))
            ys.append(np.full(int(cnt), k, dtype=np.int64))

    def cat(name):
        xs, ys = parts[name]
        return np.concatenate(xs), np.concatenate(ys)

    lx, ly = cat("labeled")
    ux, uy = cat("unlabeled")
    tx, ty = cat("test")
    meta = {
        "longtail": {f: getattr(lt, f) for f in ("K", "gamma", "N1", "mode", "M1", "D")},
        "mixture": mix.to_dict(),
        "seed": int(seed),
        "test_per_class": int(test_per_class),
    }
    return SSLDataset(lx, ly, ux, uy, tx, ty, K, n, m, meta)


def inject_ood(ds, fraction, ood, seed=0):
    """Append ``round(fraction * |unlabeled|)`` outliers drawn evenly from ``ood``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"OOD fraction must lie in [0, 1], got {fraction}")
    ood.validate()
    if ood.dim != ds.dim:
        raise ValueError("OOD mixture dimension does not match the dataset")
    n_in = int((~ds.unlabeled_ood).sum())
    n_ood = int(np.floor(fraction * n_in + 0.5))
    if n_ood == 0:
        return ds
    per = np.full(ood.n_components, n_ood // ood.n_components)
    per[: n_ood % ood.n_components] += 1
    streams = _class_streams([seed, 0x00D], ood.n_components)
    xs = [_draw(streams[c], ood.means[c], ood.scales[c], int(per[c])) for c in range(ood.n_components)]
    new_x = np.concatenate([ds.unlabeled_x] + xs)
    new_y = np.concatenate([ds.unlabeled_y, np.full(n_ood, OOD_LABEL, dtype=np.int64)])
    meta = dict(ds.meta)
    meta["ood"] = {"fraction": float(fraction), "mixture": ood.to_dict(), "seed": int(seed), "count": n_ood}
    return replace(ds, unlabeled_x=new_x, unlabeled_y=new_y, meta=meta)


@dataclass(frozen=True)
class AugmentConfig:
    weak_sigma: float = 0.1
    strong_sigma: float = 0.4
    strong_mask_rate: float = 0.2
    fill_value: float = 0.0

    def validate(self):
        if not 0.0 <= self.strong_mask_rate <= 1.0:
            raise ValueError("mask rate must lie in [0, 1]")
        if self.weak_sigma < 0 or self.strong_sigma < self.weak_sigma:
            raise ValueError("need 0 <= weak_sigma <= strong_sigma")
        return self


def augment(x, kind, cfg, rng):
    """Weak view: additive noise. Strong view: larger noise, then random feature masking.

    ``x`` may be one feature vector or a batch of rows.
    """
    x = np.asarray(x, dtype=float)
    if kind == "weak":
        if cfg.weak_sigma == 0:
            return x.copy()
        return x + cfg.weak_sigma * rng.standard_normal(x.shape)
    if kind != "strong":
        raise ValueError(f"unknown augmentation kind {kind!r}")
    out = x + cfg.strong_sigma * rng.standard_normal(x.shape)
    mask = rng.random(x.shape) < cfg.strong_mask_rate
    out[mask] = cfg.fill_value
    return out
