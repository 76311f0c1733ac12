"""Flat key=value configuration files and CLI override plumbing.

Format: one ``key = value`` per line, ``#`` comments, double-quoted strings,
comma-separated integer lists, and dotted keys for the nested sections
(``model.image_size``, ``augment.blur_kernels``). Bare keys address the
training fields. Example::

    # desk run
    epochs = 200
    batch_size = 2
    model.image_size = 64
    model.width_multiplier = 0.125
    augment.blur_kernels = 3,5,7
    data_root = "data/synthetic"

CLI flags override file values, which override the defaults.
"""

from __future__ import annotations

import copy
import types
import typing
from pathlib import Path

from .data import AugmentSpec
from .errors import ConfigurationError
from .model import ModelConfig
from .train import TrainConfig


def _parse_scalar(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == '"' and raw[-1] == '"':
        return raw[1:-1]
    if "," in raw:
        return tuple(_parse_scalar(part) for part in raw.split(","))
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(
                f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if raw.startswith('"'):
            close = raw.find('"', 1)
            tail = raw[close + 1:].strip() if close > 0 else ""
            if close > 0 and (not tail or tail.startswith("#")):
                raw = raw[:close + 1]
        elif "#" in raw:
            raw = raw.split("#", 1)[0].strip()
        if not key or not raw:
            raise ConfigurationError(
                f"{source}:{lineno}: empty key or value in {line!r}")
        values[key] = _parse_scalar(raw)
    return values


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), source=str(path))


def _coerce(key: str, hint, value):
    if isinstance(hint, types.UnionType):
        if value is None:
            return None
        inner = [a for a in hint.__args__ if a is not type(None)]
        hint = inner[0]
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(
                f"config key '{key}' expects an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(
                f"config key '{key}' expects a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigurationError(
                f"config key '{key}' expects a string, got {value!r}")
        return value
    if hint is tuple:
        if isinstance(value, (int, float)):
            value = (value,)
        if not isinstance(value, tuple):
            raise ConfigurationError(
                f"config key '{key}' expects a comma-separated list, got "
                f"{value!r}")
        return tuple(int(v) for v in value)
    raise ConfigurationError(f"config key '{key}' is not assignable")


def _assign(obj, field_name: str, key: str, value, hints: dict) -> None:
    if field_name not in hints:
        raise ConfigurationError(f"unknown config key '{key}'")
    setattr(obj, field_name, _coerce(key, hints[field_name], value))


def apply_values(config: TrainConfig, values: dict) -> TrainConfig:
    """Return a copy of ``config`` with the given key=value entries applied."""
    config = copy.deepcopy(config)
    train_hints = typing.get_type_hints(TrainConfig)
    model_hints = typing.get_type_hints(ModelConfig)
    augment_hints = typing.get_type_hints(AugmentSpec)
    for key, value in values.items():
        section, _, name = key.partition(".")
        if not name:
            if key in ("model", "augment"):
                raise ConfigurationError(
                    f"config key '{key}' needs a field, e.g. '{key}.seed'")
            _assign(config, key, key, value, train_hints)
        elif section == "model":
            _assign(config.model, name, key, value, model_hints)
        elif section == "augment":
            _assign(config.augment, name, key, value, augment_hints)
        else:
            raise ConfigurationError(f"unknown config key '{key}'")
    return config


def build_train_config(file_values: dict | None = None,
                       overrides: dict | None = None) -> TrainConfig:
    config = TrainConfig()
    if file_values:
        config = apply_values(config, file_values)
    if overrides:
        config = apply_values(config, overrides)
    return config
