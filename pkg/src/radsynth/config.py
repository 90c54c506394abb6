"""Run configuration: flat key=value files, precedence merge, seed fan-out.

A run is described by a flat string-to-string map. Sources merge with
precedence: command-line flags > config file > built-in defaults. Stage
seeds derive from one root seed plus a stage label; the derivation is a
hash, so adding a stage never shifts the seeds of existing stages.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import ConfigError


def derive_seed(root_seed: int, label: str) -> int:
    """Stable 64-bit stream seed for a named stage of a run."""
    digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(root_seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(root_seed, label)))


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def merge_config(
    defaults: dict[str, str],
    file_values: dict[str, str] | None = None,
    flag_values: dict[str, str] | None = None,
) -> dict[str, str]:
    merged = dict(defaults)
    for source in (file_values or {}), (flag_values or {}):
        for key, value in source.items():
            if key not in defaults:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
    return merged


def get_int(cfg: dict[str, str], key: str) -> int:
    try:
        return int(cfg[key])
    except KeyError:
        raise ConfigError(f"missing config key {key!r}") from None
    except ValueError:
        raise ConfigError(f"config key {key!r} must be an integer, got {cfg[key]!r}") from None


def get_float(cfg: dict[str, str], key: str) -> float:
    try:
        value = float(cfg[key])
    except KeyError:
        raise ConfigError(f"missing config key {key!r}") from None
    except ValueError:
        raise ConfigError(f"config key {key!r} must be a number, got {cfg[key]!r}") from None
    if not np.isfinite(value):
        raise ConfigError(f"config key {key!r} must be finite, got {cfg[key]!r}")
    return value


def get_bool(cfg: dict[str, str], key: str) -> bool:
    raw = cfg.get(key)
    if raw is None:
        raise ConfigError(f"missing config key {key!r}")
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key!r} must be a boolean, got {raw!r}")
