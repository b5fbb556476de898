"""
Tests for TrainConfig defaults, validation and TOML files.
"""

import pytest

from src.config import TrainConfig, load_config, parse_config, save_config
from src.errors import ConfigError


def test_defaults():
    config = TrainConfig()
    assert config.lr_weights == 0.001
    assert config.lr_positions == 50.0
    assert config.poly_power == 0.9
    assert config.epsilon_init == 0.05
    assert config.epsilon_clamp == 0.25
    assert config.max_iter == 2000
    assert config.problems() == []


def test_parse_flat_file():
    config = parse_config("lr_weights = 0.01\nmax_iter = 500\nseed = 7\nlr_positions = 10\n")
    assert config.lr_weights == 0.01
    assert config.max_iter == 500
    assert config.seed == 7
    assert config.lr_positions == 10.0
    assert isinstance(config.lr_positions, float)


@pytest.mark.parametrize("text", [
    "unknown_key = 1\n",
    "max_iter = 1.5\n",
    "lr_weights = \"fast\"\n",
    "lr_weights = true\n",
    "[section]\nmax_iter = 3\n",
    "max_iter = \n",
    "epsilon_init = 0.5\n",
    "epsilon_init = 0.0\n",
    "max_iter = 0\n",
    "lr_positions = -1.0\n",
])
def test_parse_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validate_collects_all_problems():
    config = TrainConfig(max_iter=0, batch_size=0, epsilon_clamp=0.0)
    assert len(config.problems()) == 3
    with pytest.raises(ConfigError):
        config.validate()


def test_integer_grid_needs_frozen_positions():
    assert TrainConfig(epsilon_init=0.0, lr_positions=50.0).problems()
    assert TrainConfig(epsilon_init=0.0, lr_positions=0.0).problems() == []


def test_overrides_ignore_none():
    config = TrainConfig().with_overrides(max_iter=10, seed=None, lr_positions=0)
    assert config.max_iter == 10
    assert config.seed == 0
    assert config.lr_positions == 0.0


def test_save_load_round_trip(tmp_path):
    config = TrainConfig(lr_weights=0.002, max_iter=123, seed=2 ** 40)
    path = save_config(config, tmp_path / "run.toml")
    assert load_config(path) == config


def test_load_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "absent.toml")
