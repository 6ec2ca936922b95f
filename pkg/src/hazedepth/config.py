"""Run configuration: one dataclass per subsystem, merged into :class:`RunConfig`."""
from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Invalid configuration value."""


def _check_range(name, lo_hi, lo_bound=0.0, hi_bound=None):
    lo, hi = lo_hi
    if lo > hi:
        raise ConfigError(f"{name}: min {lo} exceeds max {hi}")
    if lo < lo_bound or (hi_bound is not None and hi > hi_bound):
        raise ConfigError(f"{name}: {lo_hi} outside [{lo_bound}, {hi_bound}]")


@dataclass
class AirlightConfig:
    hue_range: tuple[float, float] = (0.0, 1.0)
    saturation_range: tuple[float, float] = (0.0, 0.6)
    value_range: tuple[float, float] = (0.6, 1.0)
    beta_range: tuple[float, float] = (0.4, 1.2)

    def __post_init__(self):
        for name in ("hue_range", "saturation_range", "value_range", "beta_range"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        _check_range("hue_range", self.hue_range, 0.0, 1.0)
        _check_range("saturation_range", self.saturation_range, 0.0, 1.0)
        _check_range("value_range", self.value_range, 0.0, 1.0)
        _check_range("beta_range", self.beta_range, 0.0)
        if self.value_range[0] <= 0:
            raise ConfigError("value_range min must be > 0")
        if self.beta_range[0] <= 0:
            raise ConfigError("beta_range min must be > 0")


# Pseudo-real negatives: hue band and beta range disjoint from the training default.
PSEUDO_REAL_AIRLIGHT = dict(
    hue_range=(0.05, 0.15), saturation_range=(0.7, 0.9), value_range=(0.5, 0.8), beta_range=(1.5, 2.5)
)


@dataclass
class EncoderConfig:
    stages: int = 4
    blocks_per_stage: int = 2
    channels: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    expansion: int = 2
    kernel_sizes: list[int] = field(default_factory=lambda: [3, 5, 7])
    # inputs are fed as [0,1] images; no mean/std normalization
    input_normalization: str = "none"

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        self.kernel_sizes = [int(k) for k in self.kernel_sizes]
        if len(self.channels) != self.stages:
            raise ConfigError(f"need {self.stages} channel entries, got {self.channels}")
        if any(c <= 0 for c in self.channels):
            raise ConfigError("channels must be positive")
        if any(b <= a for a, b in zip(self.channels, self.channels[1:])):
            raise ConfigError(f"channels must be strictly increasing: {self.channels}")
        if not self.kernel_sizes or any(k % 2 == 0 or k < 1 for k in self.kernel_sizes):
            raise ConfigError(f"kernel sizes must be odd: {self.kernel_sizes}")
        if self.expansion < 1 or self.blocks_per_stage < 1:
            raise ConfigError("expansion and blocks_per_stage must be >= 1")

    @property
    def divisor(self) -> int:
        return 2**self.stages


@dataclass
class DecoderConfig:
    num_queries: int = 64
    blocks_per_scale: int = 5
    heads: int = 4

    def __post_init__(self):
        if self.num_queries < 0:
            raise ConfigError("num_queries must be >= 0 (0 = non-learned constant query)")
        if self.blocks_per_scale < 1 or self.heads < 1:
            raise ConfigError("blocks_per_scale and heads must be >= 1")


@dataclass
class LossWeights:
    lambda1: float = 1.0  # depth Charbonnier
    lambda2: float = 1.0  # dehaze Charbonnier
    lambda3: float = 0.5  # contrastive
    lambda4: float = 1.0  # domain consistency

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            v = float(getattr(self, name))
            if not (v >= 0 and v != float("inf")):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
            setattr(self, name, v)


@dataclass
class TrainConfig:
    epochs: int = 20
    base_lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    min_lr: float | None = None  # default base_lr / 10
    max_lr: float | None = None  # default base_lr
    cycle_steps: int | None = None  # default 2 epochs
    patch: int = 64
    batch: int = 4
    neg_ratio: float = 1.0
    augment: bool = True  # random flip + quarter turns
    seed: int = 0
    grad_clip: float = 1.0
    temperature: float = 1.0
    consistency_norm: str = "l1"
    checkpoint_every: int = 0  # steps between checkpoints; 0 = every epoch end
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.betas = tuple(float(b) for b in self.betas)
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be > 0")
        if self.min_lr is None:
            self.min_lr = self.base_lr / 10
        if self.max_lr is None:
            self.max_lr = self.base_lr
        if not self.min_lr <= self.base_lr <= self.max_lr:
            raise ConfigError("need min_lr <= base_lr <= max_lr")
        if self.patch % 16:
            raise ConfigError("patch must be divisible by 16")
        if self.batch < 1 or self.epochs < 0 or self.neg_ratio < 0:
            raise ConfigError("batch >= 1, epochs >= 0, neg_ratio >= 0 required")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.consistency_norm not in ("l1", "l2"):
            raise ConfigError("consistency_norm must be 'l1' or 'l2'")


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-3`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


@dataclass
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    airlight: AirlightConfig = field(default_factory=AirlightConfig)
    extractor: str = "random-conv"
    extractor_seed: int = 1234
    paths: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        for name, cls in (("encoder", EncoderConfig), ("decoder", DecoderConfig),
                          ("train", TrainConfig), ("airlight", AirlightConfig)):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, cls(**value))
        C4 = self.encoder.channels[-1]
        if C4 % self.decoder.heads:
            raise ConfigError(f"heads={self.decoder.heads} must divide C4={C4}")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        text = path.read_text()
        data = (json.loads(text) if path.suffix == ".json" else yaml.load(text, Loader=_Loader)) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def toy_config(**train_overrides) -> RunConfig:
    """Desk-scale preset used by the acceptance runs and the demos.

    A quarter-width encoder, two residual blocks per decoder level, and a
    training setup tuned for overfitting a 16-pair set on one CPU core:
    lr 1e-3, batch 2 (so 2 negatives per batch at ratio 1), no augmentation.
    Keyword arguments override TrainConfig fields.
    """
    train = dict(base_lr=1e-3, batch=2, augment=False)
    train.update(train_overrides)
    return RunConfig(
        encoder=EncoderConfig(channels=[16, 32, 64, 128]),
        decoder=DecoderConfig(num_queries=64, blocks_per_scale=2, heads=4),
        train=TrainConfig(**train),
    )
