"""Experiment config files: a flat JSON object of CLI settings.

Any key a subcommand accepts as a flag can live in the config file
instead; flags win when both are given. Unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError

# key -> expected python type(s). Numbers are kept permissive where a
# float field could legitimately be written as an int (e.g. "lambda1": 1).
EXPERIMENT_KEYS: dict[str, tuple[type, ...]] = {
    "name": (str,),
    "dataset": (str,),
    "data": (str,),
    "out": (str,),
    "model": (str,),
    "trace": (str,),
    "seed": (int,),
    "epochs": (int,),
    "stop_accuracy": (int, float),
    "count_per_family": (int,),
    "target_class": (int,),
    "max_steps": (int,),
    "max_nodes": (int,),
    "rollout_count": (int,),
    "lambda1": (int, float),
    "lambda2": (int, float),
    "learning_rate": (int, float),
    "invalid_reward_mode": (str,),
    "initial_node": (str,),
    "max_nodes_list": (list,),
    "initial_nodes": (list,),
}


def load_experiment_config(path: str | Path) -> dict:
    """Parse and validate a config file; returns a plain dict of settings."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    unknown = sorted(set(payload) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(unknown)}")
    for key, value in payload.items():
        expected = EXPERIMENT_KEYS[key]
        if isinstance(value, bool) or not isinstance(value, expected):
            names = "/".join(t.__name__ for t in expected)
            raise ConfigError(
                f"{path}: key {key!r} should be {names}, "
                f"got {type(value).__name__}")
    return dict(payload)


def resolve(args, config: dict, key: str, default=None):
    """Flag value if given, else config value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default
