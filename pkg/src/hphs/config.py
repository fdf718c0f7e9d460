"""Flat `key = value` configuration files.

One key per line, '#' starts a comment, every module default can be
overridden, and unknown keys are hard errors so typos cannot silently
fall back to defaults. The HPHS_CONFIG environment variable supplies the
config path when the CLI is not given one explicitly.
"""

from __future__ import annotations

import math
import os
from typing import Callable, Optional

from .explorer import RunConfig
from .frontier import SamplerConfig
from .hierarchy import SequenceWeights
from .selection import GainWeights

ENV_CONFIG = "HPHS_CONFIG"


class ConfigError(ValueError):
    """Malformed config file, unknown key, or bad value."""


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {raw!r}") from exc


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {raw!r}") from exc


def _deg_to_rad(raw: str) -> float:
    return math.radians(_parse_float(raw))


# key -> (config group, dataclass field, converter)
CONFIG_KEYS: dict[str, tuple[str, str, Callable[[str], object]]] = {
    "grid.resolution": ("run", "resolution", _parse_float),
    "grid.beams": ("run", "beams", _parse_int),
    "grid.max_range": ("run", "max_range", _parse_float),
    "grid.clearance": ("run", "clearance", _parse_int),
    "run.speed": ("run", "speed", _parse_float),
    "run.replan_interval": ("run", "replan_interval", _parse_int),
    "run.max_steps": ("run", "max_steps", _parse_int),
    "subregion.n_w": ("run", "n_w", _parse_int),
    "subregion.n_h": ("run", "n_h", _parse_int),
    "sampler.r_gap": ("sampler", "r_gap", _parse_float),
    "sampler.theta_inf_deg": ("sampler", "theta_inf", _deg_to_rad),
    "sampler.d_s": ("sampler", "d_s", _parse_float),
    "sampler.clearance_radius": ("sampler", "clearance_radius", _parse_float),
    "sampler.dedup_radius": ("sampler", "dedup_radius", _parse_float),
    "sequence.lambda1": ("sequence", "lambda1", _parse_float),
    "sequence.lambda2": ("sequence", "lambda2", _parse_float),
    "sequence.lambda3": ("sequence", "lambda3", _parse_float),
    "weights.tau1": ("gains", "tau1", _parse_float),
    "weights.tau2": ("gains", "tau2", _parse_float),
    "weights.tau3": ("gains", "tau3", _parse_float),
    "weights.kernel_k": ("gains", "kernel_k", _parse_int),
    "weights.s_occupied": ("gains", "s_occupied", _parse_float),
    "weights.s_free": ("gains", "s_free", _parse_float),
    "weights.s_unknown": ("gains", "s_unknown", _parse_float),
}


def parse_config(text: str) -> dict[str, object]:
    """Parse config text into {registry key: converted value}."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        _, _, convert = CONFIG_KEYS[key]
        try:
            values[key] = convert(raw_value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: key {key!r}: {exc}") from exc
    return values


def build_config(overrides: Optional[dict[str, object]] = None) -> RunConfig:
    """Construct a RunConfig from defaults plus registry-keyed overrides.

    Sub-configs are rebuilt from scratch so their own validation runs on
    the overridden values.
    """
    groups: dict[str, dict[str, object]] = {"run": {}, "sampler": {},
                                            "sequence": {}, "gains": {}}
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        group, field_name, _ = CONFIG_KEYS[key]
        groups[group][field_name] = value
    try:
        return RunConfig(
            sampler=SamplerConfig(**groups["sampler"]),
            sequence=SequenceWeights(**groups["sequence"]),
            gains=GainWeights(**groups["gains"]),
            **groups["run"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str] = None) -> RunConfig:
    """Load a RunConfig from a file, the HPHS_CONFIG fallback, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return build_config()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    return build_config(parse_config(text))
