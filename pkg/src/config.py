"""
Training configuration: defaults, validation, and TOML load/save.

A config file is a flat ``key = value`` list, which is valid TOML:

    lr_weights = 0.001
    lr_positions = 50.0
    max_iter = 500
    seed = 7

Every key has a default; unknown keys are an error.
"""

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Union

import toml

from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters of one training run.

    lr_weights / lr_positions are the base rates for W and P, both decayed
    with the poly schedule. epsilon_init shifts the initial grid off the
    integers; epsilon_clamp is the slack of the per-step position clamp.
    """

    lr_weights: float = 0.001
    lr_positions: float = 50.0
    poly_power: float = 0.9
    max_iter: int = 2000
    batch_size: int = 4
    epsilon_init: float = 0.05
    epsilon_clamp: float = 0.25
    seed: int = 0
    hidden_channels: int = 8
    eval_every: int = 0

    def problems(self) -> List[str]:
        """All constraint violations, empty when the config is valid."""
        issues = []
        if self.lr_weights < 0:
            issues.append(f"lr_weights must be >= 0, got {self.lr_weights}")
        if self.lr_positions < 0:
            issues.append(f"lr_positions must be >= 0, got {self.lr_positions}")
        if self.poly_power <= 0:
            issues.append(f"poly_power must be > 0, got {self.poly_power}")
        if self.max_iter < 1:
            issues.append(f"max_iter must be >= 1, got {self.max_iter}")
        if self.batch_size < 1:
            issues.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not abs(self.epsilon_init) < 0.5:
            issues.append(f"|epsilon_init| must be < 0.5, got {self.epsilon_init}")
        if self.epsilon_init == 0 and self.lr_positions > 0:
            issues.append("epsilon_init must be non-zero when lr_positions > 0, integer taps start on a kink")
        if self.epsilon_clamp <= 0:
            issues.append(f"epsilon_clamp must be > 0, got {self.epsilon_clamp}")
        if not 0 <= self.seed < 2 ** 64:
            issues.append(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.hidden_channels < 1:
            issues.append(f"hidden_channels must be >= 1, got {self.hidden_channels}")
        if self.eval_every < 0:
            issues.append(f"eval_every must be >= 0, got {self.eval_every}")
        return issues

    def validate(self) -> "TrainConfig":
        issues = self.problems()
        if issues:
            raise ConfigError("; ".join(issues))
        return self

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Copy with the given fields replaced; ``None`` values are ignored."""
        given = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **_coerce(given))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_toml(self) -> str:
        return toml.dumps(self.to_dict())


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(values: Dict[str, Any]) -> Dict[str, Any]:
    result = {}
    for key, value in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}'")
        expected = _FIELD_TYPES[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if expected in (int, "int"):
            if float(value) != int(value):
                raise ConfigError(f"{key}: expected an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
        result[key] = value
    return result


def parse_config(text: str) -> TrainConfig:
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise ConfigError(f"cannot parse config: {e}") from e
    nested = [key for key, value in data.items() if isinstance(value, dict)]
    if nested:
        raise ConfigError(f"config must be flat key = value pairs, found tables: {', '.join(nested)}")
    return TrainConfig(**_coerce(data)).validate()


def load_config(path: Union[str, Path]) -> TrainConfig:
    """Read a config file; a missing path raises OSError."""
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(config: TrainConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(config.to_toml(), encoding="utf-8")
    return path
