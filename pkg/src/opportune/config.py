"""Flat dotted-key configuration: TOML file plus ``--set key=value`` overrides.

Unknown keys are rejected so typos fail loudly instead of silently falling
back to defaults. The ``OPPORTUNE_CONFIG`` environment variable supplies the
default file path.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from opportune.errors import ConfigError
from opportune.integration import PipelineConfig
from opportune.matching import MatchConfig
from opportune.planner import PlannerConfig

ENV_VAR = "OPPORTUNE_CONFIG"

DEFAULTS: dict[str, object] = {
    "match.filter_threshold": 0.5,
    "match.class_threshold": 0.85,
    "match.sibling_threshold": 0.5,
    "match.inner_theta": 0.9,
    "knowledge.store_path": "",
    "knowledge.endpoint": "https://api.conceptnet.io",
    "knowledge.online": False,
    "planner.node_budget": 1_000_000,
    "planner.time_budget_ms": 60_000,
    "planner.strategy": "optimal",
    "planner.external_cmd": "",
    "provider.path": "",
    "ontology.repository": "",
    "ontology.sv_squared": True,
    "execution.charge_planning_time": False,
    "execution.on_failure": "halt",
}


@dataclass
class Config:
    values: dict[str, object] = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def set(self, key: str, value: object) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        expected = type(DEFAULTS[key])
        if expected in (int, float) and isinstance(value, (int, float)) \
                and not isinstance(value, bool):
            value = expected(value)
        if not isinstance(value, expected) or (
            expected is not bool and isinstance(value, bool)
        ):
            raise ConfigError(
                f"config key {key!r} expects {expected.__name__}, got {value!r}"
            )
        self.values[key] = value

    def match_config(self) -> MatchConfig:
        return MatchConfig(
            filter_threshold=self["match.filter_threshold"],
            class_threshold=self["match.class_threshold"],
            sibling_threshold=self["match.sibling_threshold"],
            inner_theta=self["match.inner_theta"],
        )

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(
            node_budget=self["planner.node_budget"],
            time_budget_ms=self["planner.time_budget_ms"],
            strategy=self["planner.strategy"],
            external_cmd=self["planner.external_cmd"],
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            match=self.match_config(),
            planner=self.planner_config(),
            sv_squared=self["ontology.sv_squared"],
            charge_planning_time=self["execution.charge_planning_time"],
        )


def _flatten(data: dict, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> Config:
    """Build a Config from defaults, an optional TOML file, and overrides.

    ``path=None`` falls back to $OPPORTUNE_CONFIG when set.
    """
    config = Config()
    if path is None:
        env_path = os.environ.get(ENV_VAR)
        path = env_path if env_path else None
    if path is not None:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML ({exc})") from None
        for key, value in sorted(_flatten(data).items()):
            config.set(key, value)
    for override in overrides:
        key, sep, raw = override.partition("=")
        if not sep:
            raise ConfigError(f"override {override!r} must look like key=value")
        config.set(key.strip(), _coerce(key.strip(), raw.strip()))
    return config


def _coerce(key: str, raw: str) -> object:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    expected = type(DEFAULTS[key])
    if expected is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {raw!r}")
    if expected is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}") from None
    if expected is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}") from None
    return raw
