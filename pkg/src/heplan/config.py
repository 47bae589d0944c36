"""key=value configuration files.

UTF-8 text, one ``namespace.key = value`` pair per line, ``#`` comments.
Namespaces: ``rules.*`` (level rules), ``planner.*``, ``cost.*`` (weights),
``noise.*``, ``backend.*``. Unknown keys inside a recognized namespace are
rejected; unrecognized namespaces are rejected too, so typos surface early.

Example::

    rules.cp_mult_cost = 1
    rules.polyact_depth.8 = 4
    planner.max_level = 12
    planner.fanout_threshold = inf
    cost.w_bootstrap = 25.0      # seconds per bootstrap
    noise.epsilon = 1e-3
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from .backend import NoiseConfig
from .costs import CostWeights, DEFAULT_WEIGHTS
from .errors import ConfigError
from .levels import LevelRules
from .planner import PlannerConfig, Strategy

__all__ = [
    "parse_config",
    "read_config",
    "load_level_rules",
    "load_planner_config",
    "load_cost_weights",
    "load_noise_config",
    "activation_coeffs_path",
]

_NAMESPACES = ("rules", "planner", "cost", "noise", "backend")


def parse_config(text: str) -> dict[str, str]:
    """Parse config text into a flat key -> raw string map."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key.split(".", 1)[0] not in _NAMESPACES:
            raise ConfigError(
                f"line {lineno}: unknown namespace in {key!r} "
                f"(expected one of {', '.join(_NAMESPACES)})")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _take(cfg: dict[str, str], namespace: str) -> dict[str, str]:
    return {k[len(namespace) + 1:]: v for k, v in cfg.items()
            if k.startswith(namespace + ".")}


def _as_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc


def _as_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from exc


def load_level_rules(cfg: dict[str, str]) -> LevelRules:
    section = _take(cfg, "rules")
    kwargs = {}
    overrides: dict[int, int] = {}
    for key, value in section.items():
        if key in ("cc_mult_cost", "cp_mult_cost", "bn_cost", "add_cost"):
            kwargs[key] = _as_int(value, f"rules.{key}")
        elif key.startswith("polyact_depth."):
            degree = _as_int(key.split(".", 1)[1], f"rules.{key}")
            overrides[degree] = _as_int(value, f"rules.{key}")
        else:
            raise ConfigError(f"unknown key rules.{key}")
    if overrides:
        kwargs["polyact_levels"] = tuple(sorted(overrides.items()))
    return LevelRules(**kwargs)


def load_planner_config(cfg: dict[str, str],
                        max_level_override: int | None = None) -> PlannerConfig:
    section = _take(cfg, "planner")
    kwargs: dict = {}
    for key, value in section.items():
        if key == "max_level":
            kwargs[key] = _as_int(value, "planner.max_level")
        elif key == "bootstrap_reset_to":
            kwargs[key] = _as_int(value, "planner.bootstrap_reset_to")
        elif key == "fanout_threshold":
            kwargs[key] = (math.inf if value.lower() in ("inf", "infinity")
                           else _as_int(value, "planner.fanout_threshold"))
        elif key == "strategy":
            try:
                kwargs[key] = Strategy(value)
            except ValueError as exc:
                raise ConfigError(
                    f"planner.strategy: expected one of "
                    f"{[s.value for s in Strategy]}, got {value!r}") from exc
        else:
            raise ConfigError(f"unknown key planner.{key}")
    built = PlannerConfig(**kwargs)
    if max_level_override is not None:
        built = dataclasses.replace(built, max_level=max_level_override)
    return built


def load_cost_weights(cfg: dict[str, str]) -> CostWeights:
    section = _take(cfg, "cost")
    if not section:
        return DEFAULT_WEIGHTS
    kwargs = {f.name: getattr(DEFAULT_WEIGHTS, f.name)
              for f in dataclasses.fields(CostWeights)}
    valid = set(kwargs)
    for key, value in section.items():
        if key not in valid:
            raise ConfigError(f"unknown key cost.{key}")
        kwargs[key] = _as_float(value, f"cost.{key}")
    return CostWeights(**kwargs)


def load_noise_config(cfg: dict[str, str], seed_override: int | None = None) -> NoiseConfig:
    section = _take(cfg, "noise")
    epsilon = 0.0
    seed = 0
    for key, value in section.items():
        if key == "epsilon":
            epsilon = _as_float(value, "noise.epsilon")
        elif key == "seed":
            seed = _as_int(value, "noise.seed")
        else:
            raise ConfigError(f"unknown key noise.{key}")
    if seed_override is not None:
        seed = seed_override
    return NoiseConfig(epsilon=epsilon, seed=seed)


def activation_coeffs_path(cfg: dict[str, str]) -> str | None:
    section = _take(cfg, "backend")
    for key in section:
        if key != "activation_coeffs":
            raise ConfigError(f"unknown key backend.{key}")
    return section.get("activation_coeffs")
