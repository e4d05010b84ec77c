"""Declarative network and training configuration with a versioned JSON form."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError

ARCH_SCHEMA_VERSION = 1
TRAIN_SCHEMA_VERSION = 1
FAMILIES = ("plainstack", "residual", "dense", "dualnet")


@dataclass
class ArchitectureConfig:
    """Architecture description.

    ``family`` picks the topology: ``plainstack`` (n plain blocks),
    ``residual`` (n residual blocks), ``dense`` (n dense blocks of
    ``growth_rate`` plain blocks, interleaved with n-1 transition blocks)
    or ``dualnet`` (``dense`` plus self-attention before pooling).
    ``attention_width=None`` means "same as the incoming channel width".
    """

    family: str = "dualnet"
    n_blocks: int = 3
    growth_rate: int = 4
    stem_width: int = 8
    kernel_size: int = 3
    pool_size: int = 2
    pool_stride: int = 1
    dropout_rate: float = 0.4
    bn_momentum: float = 0.99
    attention: bool = False
    attention_width: int | None = None
    attention_projections: bool = True
    attention_scaled: bool = True
    connectivity: str = "concat"
    n_classes: int = 2
    n_features: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family == "dualnet":
            self.attention = True
        if self.family == "residual" and self.connectivity == "concat":
            # residual blocks are additive by definition
            self.connectivity = "add"
        self.validate()

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        for name in ("n_blocks", "growth_rate", "stem_width", "kernel_size", "pool_size", "pool_stride"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0 <= self.bn_momentum < 1:
            raise ConfigError(f"bn_momentum must be in [0, 1), got {self.bn_momentum}")
        if self.connectivity not in ("concat", "add"):
            raise ConfigError(f"connectivity must be 'concat' or 'add', got {self.connectivity!r}")
        if self.family == "plainstack" and self.connectivity == "add":
            raise ConfigError("plainstack has no shortcut connections; use family='residual' for add")
        if self.pool_stride > 1 and self.family != "plainstack":
            raise ConfigError("shortcut connections need length-preserving pooling; pool_stride > 1 "
                              "is only valid for family='plainstack'")
        if self.attention_width is not None and self.attention_width < 1:
            raise ConfigError(f"attention_width must be positive, got {self.attention_width}")
        if self.n_classes < 2:
            raise ConfigError(f"n_classes must be at least 2, got {self.n_classes}")
        if self.n_features is not None and self.n_features < 1:
            raise ConfigError(f"n_features must be positive, got {self.n_features}")

    @property
    def length_preserving(self) -> bool:
        return self.pool_stride == 1

    def replace(self, **changes) -> "ArchitectureConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {"version": ARCH_SCHEMA_VERSION, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        d = dict(d)
        version = d.pop("version", ARCH_SCHEMA_VERSION)
        if version != ARCH_SCHEMA_VERSION:
            raise ConfigError(f"unsupported architecture config version {version}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown architecture config fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ArchitectureConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def tiny(cls, **overrides) -> "ArchitectureConfig":
        """DualNet-tiny: stem 8, one dense block with k=2, attention width 8."""
        base = dict(family="dualnet", n_blocks=1, growth_rate=2, stem_width=8, attention_width=8, n_classes=2)
        base.update(overrides)
        return cls(**base)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 256
    epochs: int = 10
    seed: int = 0
    precision: str = "double"
    task: str = "binary"
    check_finite: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch norm needs batch statistics)")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.precision not in ("double", "single"):
            raise ConfigError(f"precision must be 'double' or 'single', got {self.precision!r}")
        if self.task not in ("binary", "multiclass"):
            raise ConfigError(f"task must be 'binary' or 'multiclass', got {self.task!r}")

    def to_dict(self) -> dict:
        return {"version": TRAIN_SCHEMA_VERSION, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        version = d.pop("version", TRAIN_SCHEMA_VERSION)
        if version != TRAIN_SCHEMA_VERSION:
            raise ConfigError(f"unsupported train config version {version}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))
