"""JSON configuration files for :class:`~tddlint.model.AnalysisConfig`.

Example (every key optional, shown with defaults)::

    {
      "thresholds": {
        "free-ride": {"max_assertions": 3},
        "giant": {"max_statements": 30},
        "excessive-setup": {"max_statements": 15, "max_mocks": 5},
        "slow-poke": {"test_ms": 1000, "suite_ms": 60000},
        "enumerator": {"min_name_length": 4}
      },
      "enabled": ["free-ride", "giant", ...],
      "the_one_k": 3,
      "tolerances": [0.0, 0.0, 0.0, 0.0],
      "weights": [8, 4, 2, 1],
      "gate": 0
    }
"""

from __future__ import annotations

import json
from dataclasses import replace

from .detectors import list_rules
from .model import AnalysisConfig, Thresholds


class ConfigError(ValueError):
    pass


# (rule id, key in file) -> Thresholds attribute
THRESHOLD_KEYS = {
    ("free-ride", "max_assertions"): "free_ride_max_assertions",
    ("giant", "max_statements"): "giant_max_statements",
    ("excessive-setup", "max_statements"): "excessive_setup_max_statements",
    ("excessive-setup", "max_mocks"): "excessive_setup_max_mocks",
    ("slow-poke", "test_ms"): "slow_poke_test_ms",
    ("slow-poke", "suite_ms"): "slow_poke_suite_ms",
    ("enumerator", "min_name_length"): "enumerator_min_name_length",
}
_TOP_KEYS = {"thresholds", "enabled", "the_one_k", "tolerances", "weights", "gate"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def config_from_dict(doc) -> AnalysisConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")

    th = Thresholds()
    raw = doc.get("thresholds", {})
    if not isinstance(raw, dict):
        raise ConfigError("'thresholds' must be an object")
    for rule_id in sorted(raw):
        values = raw[rule_id]
        if not isinstance(values, dict):
            raise ConfigError(f"thresholds.{rule_id} must be an object")
        for key in sorted(values):
            attr = THRESHOLD_KEYS.get((rule_id, key))
            if attr is None:
                raise ConfigError(f"unknown threshold {rule_id}.{key}")
            if not _is_int(values[key]) or values[key] < 0:
                raise ConfigError(f"threshold {rule_id}.{key} must be an integer >= 0")
            th = replace(th, **{attr: values[key]})

    kwargs: dict = {"thresholds": th}
    if "enabled" in doc:
        enabled = doc["enabled"]
        known = {r.rule_id for r in list_rules()}
        if not isinstance(enabled, list) or not all(isinstance(r, str) for r in enabled):
            raise ConfigError("'enabled' must be a list of rule ids")
        bad = sorted(set(enabled) - known)
        if bad:
            raise ConfigError(f"unknown rule id {bad[0]!r} in 'enabled'")
        kwargs["enabled"] = frozenset(enabled)
    if "the_one_k" in doc:
        if not _is_int(doc["the_one_k"]):
            raise ConfigError("'the_one_k' must be an integer")
        kwargs["the_one_k"] = doc["the_one_k"]
    for key in ("tolerances", "weights"):
        if key in doc:
            val = doc[key]
            if not isinstance(val, list) or len(val) != 4 or not all(_is_num(v) for v in val):
                raise ConfigError(f"'{key}' must be a list of four numbers")
            kwargs[key] = tuple(val)
    if "gate" in doc:
        if not _is_int(doc["gate"]):
            raise ConfigError("'gate' must be an integer")
        kwargs["gate"] = doc["gate"]
    try:
        return AnalysisConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(text: str) -> AnalysisConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def config_to_dict(config: AnalysisConfig) -> dict:
    """The effective configuration, in the same shape :func:`config_from_dict` reads."""
    thresholds: dict = {}
    for (rule_id, key), attr in THRESHOLD_KEYS.items():
        thresholds.setdefault(rule_id, {})[key] = getattr(config.thresholds, attr)
    enabled = config.enabled if config.enabled is not None else {r.rule_id for r in list_rules()}
    return {
        "thresholds": thresholds,
        "enabled": sorted(enabled),
        "the_one_k": config.the_one_k,
        "tolerances": list(config.tolerances),
        "weights": list(config.weights),
        "gate": config.gate,
    }

