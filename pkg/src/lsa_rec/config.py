"""Run configuration dataclasses and TOML/flag loading."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

VARIANTS = ("full", "no_aspect_attention", "no_fusion", "no_short", "no_long")


@dataclass
class TrainConfig:
    K: int = 80
    N: int = 20
    T: float = 180.0  # days
    d: int = 64
    L: int = 2
    H: int = 2
    lam: float = 1.0
    k_fm: int = 8
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    min_freq: int = 2
    max_union: int = 128
    val_fraction: float = 0.1
    test_ratio: float = 0.2
    full_vocabulary: bool = False
    edge_scale: float = 100.0  # divisor inside the edge-weight score
    variant: str = "full"
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.K < 1 or self.N < 1:
            raise ValueError("K and N must be >= 1")
        if self.d % self.H:
            raise ValueError(f"d={self.d} must be divisible by H={self.H}")
        if not self.edge_scale > 0:
            raise ValueError("edge_scale must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


class ConfigKeyError(KeyError):
    """Unknown configuration key; ``key`` names the offender."""

    def __init__(self, key: str):
        super().__init__(key)
        self.key = key


def _coerce(value: Any, target_type: Any, default: Any) -> Any:
    kind = type(default)
    if isinstance(value, str):
        if kind is bool:
            low = value.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return low in ("1", "true", "yes")
        if kind in (int, float):
            if value.lower() in ("inf", "infinity"):
                return float("inf")
            return kind(float(value)) if kind is int else float(value)
        return value
    if kind is float and isinstance(value, int):
        return float(value)
    return value


def apply_overrides(obj, overrides: dict[str, Any]):
    """Return a copy of dataclass ``obj`` with ``overrides`` applied; unknown keys raise."""
    names = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in overrides.items():
        if key not in names:
            raise ConfigKeyError(key)
        changes[key] = _coerce(value, names[key].type, getattr(obj, key))
    return dataclasses.replace(obj, **changes)


def load_toml(path) -> dict[str, dict[str, Any]]:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def config_dict(obj) -> dict[str, Any]:
    return dataclasses.asdict(obj)
