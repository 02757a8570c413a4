"""JSON experiment configs: strict parsing, defaults materialised on output.

A config document has three top-level sections::

    {
      "dataset": {"path": null, "seed": 0, "test_per_class": 200,
                  "longtail": {...}, "mixture": {...}, "ood": {...}},
      "train": {... TrainConfig fields, with "optimizer", "policy", "augment"},
      "output_dir": null
    }

Every section is optional; unknown keys anywhere raise :class:`ConfigError`.
:func:`to_dict` returns the fully resolved document that runs echo into
their output directories.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from typing import Optional

from .data import (
    AugmentConfig,
    LongTailSpec,
    MixtureSpec,
    default_ood_mixture,
    inject_ood,
    make_dataset,
    class_means,
)
from .policy import PolicyConfig
from .trainer import OptimizerConfig, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class MixtureConfig:
    """Class-conditional Gaussians; explicit ``means``/``scales`` override the layout."""

    dim: int = 2
    radius: float = 3.0
    scale: float = 1.0
    means: Optional[list] = None
    scales: Optional[list] = None

    def build(self, K):
        if self.means is not None:
            scales = self.scales if self.scales is not None else [self.scale] * len(self.means)
            return MixtureSpec(self.means, scales)
        return MixtureSpec(class_means(K, self.dim, self.radius), [self.scale] * K)


@dataclass
class OODConfig:
    """Outlier injection; ``distance`` is a multiple of the class-mean radius."""

    fraction: float = 0.0
    scale: float = 0.5
    distance: float = 1.0
    n_components: Optional[int] = None
    seed: Optional[int] = None

    def build(self, K, mix_cfg):
        return default_ood_mixture(
            K, mix_cfg.dim, mix_cfg.radius, self.scale, self.n_components, self.distance
        )


@dataclass
class DatasetConfig:
    path: Optional[str] = None
    seed: int = 0
    test_per_class: int = 200
    longtail: LongTailSpec = field(default_factory=LongTailSpec)
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    ood: OODConfig = field(default_factory=OODConfig)

    def build(self):
        lt = self.longtail.validate()
        mix = self.mixture.build(lt.K).validate()
        ds = make_dataset(lt, mix, self.seed, self.test_per_class)
        if self.ood.fraction > 0:
            ood_seed = self.seed if self.ood.seed is None else self.ood.seed
            ds = inject_ood(ds, self.ood.fraction, self.ood.build(lt.K, self.mixture), ood_seed)
        return ds


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: Optional[str] = None

    def validate(self):
        self.dataset.longtail.validate()
        self.dataset.mixture.build(self.dataset.longtail.K).validate()
        if not 0.0 <= self.dataset.ood.fraction <= 1.0:
            raise ConfigError("ood.fraction must lie in [0, 1]")
        self.train.validate()
        return self


def _nested_type(hint):
    if dataclasses.is_dataclass(hint):
        return hint
    return None


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _nested_type(hints.get(key))
        if sub is not None:
            kwargs[key] = _build(sub, value, f"{where}.{key}")
        elif key == "hidden":
            kwargs[key] = tuple(int(v) for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(data):
    cfg = _build(ExperimentConfig, data, "config")
    try:
        return cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def dumps(cfg):
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


__all__ = [
    "AugmentConfig",
    "ConfigError",
    "DatasetConfig",
    "ExperimentConfig",
    "MixtureConfig",
    "OODConfig",
    "OptimizerConfig",
    "PolicyConfig",
    "TrainConfig",
    "dumps",
    "from_dict",
    "load",
    "to_dict",
]
