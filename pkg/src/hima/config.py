"""Tunable defaults and the JSON config file that overrides them.

Environment variables ``HIMA_AGENT_ENDPOINT`` and ``HIMA_AGENT_TIMEOUT``
take precedence over both.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .world.types import Rules


@dataclass(frozen=True)
class DemoConfig:
    window_seconds: int = 180
    rationale_mode: str = "template"
    winners_only: bool = True


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 3
    seed: int = 0
    max_iter: int = 100
    dominance_threshold: float = 0.6


@dataclass(frozen=True)
class FeatureScales:
    minerals: float = 1000.0
    gas: float = 1000.0
    supply: float = 200.0
    unit_count: float = 20.0
    building_count: float = 10.0
    game_time: float = 3600.0


@dataclass(frozen=True)
class PlannerWeights:
    feasible_now: float = 1.0
    majority: float = 0.5
    so_alignment: float = 0.5


@dataclass(frozen=True)
class FeedbackConfig:
    threat_threshold: int = 10
    replan_period: int = 180
    max_retries_per_action: int = 2
    retry_delay: int = 10

    def __post_init__(self):
        if self.threat_threshold < 1:
            raise ValueError("threat_threshold must be >= 1")
        if self.replan_period < 1:
            raise ValueError("replan_period must be >= 1")


@dataclass(frozen=True)
class AgentConfig:
    endpoint: Optional[str] = None
    timeout: float = 60.0
    temperature: float = 0.7
    max_actions: int = 20


@dataclass(frozen=True)
class HarnessConfig:
    matches: int = 50
    ablation_matches: int = 20
    workers: int = 1


@dataclass(frozen=True)
class Settings:
    rules: Rules = field(default_factory=Rules)
    demos: DemoConfig = field(default_factory=DemoConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    features: FeatureScales = field(default_factory=FeatureScales)
    planner: PlannerWeights = field(default_factory=PlannerWeights)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)


def _merge(obj, overrides: dict):
    if not dataclasses.is_dataclass(obj):
        return overrides
    changes = {}
    names = {f.name for f in dataclasses.fields(obj)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown config key {key!r} for {type(obj).__name__}")
        current = getattr(obj, key)
        changes[key] = _merge(current, value) if dataclasses.is_dataclass(current) else value
    return dataclasses.replace(obj, **changes)


def to_dict(settings: Settings) -> dict:
    return dataclasses.asdict(settings)


def load_config(path: "str | Path | None" = None, env: Optional[dict] = None) -> Settings:
    settings = Settings()
    if path is not None:
        settings = _merge(settings, json.loads(Path(path).read_text()))
    env = os.environ if env is None else env
    agent = settings.agent
    if env.get("HIMA_AGENT_ENDPOINT"):
        agent = dataclasses.replace(agent, endpoint=env["HIMA_AGENT_ENDPOINT"])
    if env.get("HIMA_AGENT_TIMEOUT"):
        agent = dataclasses.replace(agent, timeout=float(env["HIMA_AGENT_TIMEOUT"]))
    return dataclasses.replace(settings, agent=agent)
