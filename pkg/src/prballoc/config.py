"""Run configuration: one strict JSON document plus dotted CLI overrides.

Unknown keys are rejected outright - a typo like "learnin_rate" would
otherwise silently invalidate a whole comparison sweep.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .agents import ALL_AGENTS, TrainConfig
from .env import EnvConfig, TrafficPattern, default_traffic_b
from .exceptions import ConfigError, ContractError
from .explainer import ExplainConfig


@dataclass
class EvalSettings:
    episodes: int = 20
    smoothing_window: int = 25

    def __post_init__(self):
        if self.episodes < 1 or self.smoothing_window < 1:
            raise ContractError("eval episodes and smoothing_window must be >= 1")


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    traffic: TrafficPattern = field(default_factory=default_traffic_b)
    train: TrainConfig = field(default_factory=TrainConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    agent: str = "gnn-reinforce"
    agents: tuple = ALL_AGENTS
    seeds: tuple = (0, 1, 2, 3, 4)
    checkpoint_marks: tuple = (0.0, 0.5, 1.0)
    out_dir: str = "out"

    def __post_init__(self):
        if self.agent not in ALL_AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {ALL_AGENTS}")
        for a in self.agents:
            if a not in ALL_AGENTS:
                raise ConfigError(f"unknown agent {a!r} in agents list")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")


_SECTION_TYPES = {
    "env": EnvConfig,
    "traffic": TrafficPattern,
    "train": TrainConfig,
    "explain": ExplainConfig,
    "eval": EvalSettings,
}


def _build_section(cls, data: dict, prefix: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {prefix}.{key}")
    kwargs = dict(data)
    if cls is TrafficPattern and "rate_schedule" in kwargs:
        kwargs["rate_schedule"] = tuple(tuple(p) for p in kwargs["rate_schedule"])
    try:
        return cls(**kwargs)
    except ContractError as exc:
        raise ConfigError(f"invalid {prefix} config: {exc}") from exc


def build_run_config(data: dict) -> RunConfig:
    """Validate a raw dict (parsed JSON + overrides) into a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    top_names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - top_names
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        elif key in ("agents", "seeds", "checkpoint_marks"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None, overrides=()) -> RunConfig:
    """Load JSON config (defaults when path is None) and apply overrides.

    Overrides are (dotted.path, raw_string) pairs; values parse as JSON
    first and fall back to plain strings, so --train.learning_rate 0.01
    and --traffic.kind periodic both work.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from exc
    for dotted, raw in overrides:
        _apply_override(data, dotted, raw)
    return build_run_config(data)


def _apply_override(data: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = dotted.split(".")
    if not all(parts):
        raise ConfigError(f"bad override path {dotted!r}")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-object")
    node[parts[-1]] = value
