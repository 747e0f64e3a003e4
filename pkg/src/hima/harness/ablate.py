"""Ablation sweeps: one win-rate row per value of a single configuration axis."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..config import Settings
from .match import Builtin, Hima, MatchConfig, win_rate
from .pipeline import build_from_logs, expert_replays

AXES = ("agent_count", "aggregation", "tcot", "delta")
AGGREGATIONS = {"Simple": "simple", "NGT": "ngt_plain", "NGT+TR-SO": "ngt"}


class UnknownAxis(ValueError):
    pass


@dataclass
class AblationSpec:
    axis: str
    values: Optional[list] = None
    level: int = 5
    n: int = 20
    seed_base: int = 0
    race: str = "protoss"
    opponent_race: str = "zerg"
    workers: int = 1
    time_cap: int = 3600
    settings: Settings = field(default_factory=Settings)

    def resolved_values(self) -> list:
        if self.values is not None:
            return list(self.values)
        return {"agent_count": [1, 3], "aggregation": list(AGGREGATIONS), "tcot": [True, False],
                "delta": [60, 180, 300]}[self.axis]

    def validate(self) -> None:
        if self.axis not in AXES:
            raise UnknownAxis(f"unknown ablation axis {self.axis!r}; expected one of {', '.join(AXES)}")
        for v in self.resolved_values():
            if self.axis == "agent_count" and not (isinstance(v, int) and 1 <= v <= 5):
                raise ValueError(f"agent_count must be in 1..5, got {v!r}")
            if self.axis == "aggregation" and v not in AGGREGATIONS:
                raise ValueError(f"aggregation must be one of {', '.join(AGGREGATIONS)}, got {v!r}")
            if self.axis == "delta" and not (isinstance(v, int) and v >= 1):
                raise ValueError(f"delta must be a positive integer, got {v!r}")
            if self.axis == "tcot" and not isinstance(v, bool):
                raise ValueError(f"tcot must be true or false, got {v!r}")


@dataclass
class AblationRow:
    axis: str
    value: object
    win_rate: float
    wins: int
    n: int
    mean_planner_calls: float


@dataclass
class AblationTable:
    rows: list
    level: int

    def to_tsv(self) -> str:
        lines = ["axis\tvalue\twin_rate\twins\tn\tmean_planner_calls\tlevel"]
        lines += [f"{r.axis}\t{r.value}\t{r.win_rate:.4f}\t{r.wins}\t{r.n}\t{r.mean_planner_calls:.2f}\t{self.level}"
                  for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv())


def _pool(logs, spec: AblationSpec, k: Optional[int] = None):
    settings = spec.settings
    if k is not None:
        settings = dataclasses.replace(settings, clustering=dataclasses.replace(settings.clustering, k=k))
    return build_from_logs(logs, spec.race, settings).pool


def _side(spec: AblationSpec, value, logs, base_pool) -> Hima:
    fb = spec.settings.feedback
    if spec.axis == "agent_count":
        # one advisor over all demonstrations imitates directly, without a planner
        if value == 1:
            return Hima(_pool(logs, spec, 1), feedback=fb, mode="direct")
        return Hima(_pool(logs, spec, value), feedback=fb)
    if spec.axis == "aggregation":
        return Hima(base_pool, feedback=fb, mode=AGGREGATIONS[value])
    if spec.axis == "tcot":
        return Hima(base_pool, feedback=fb, tcot=value)
    return Hima(base_pool, feedback=dataclasses.replace(fb, replan_period=value), delta=value)


def ablate(spec: AblationSpec, logs: Optional[list] = None, out: Optional[str] = None) -> AblationTable:
    """Run ``win_rate`` for every value on the axis against one builtin level."""
    spec.validate()
    logs = logs if logs is not None else expert_replays(spec.race)
    base_pool = None if spec.axis == "agent_count" else _pool(logs, spec)
    rows = []
    for value in spec.resolved_values():
        side = _side(spec, value, logs, base_pool)
        template = MatchConfig((side, Builtin(spec.level)), (spec.race, spec.opponent_race),
                               time_cap=spec.time_cap)
        wr = win_rate(template, spec.n, spec.seed_base, spec.workers)
        mean_calls = sum(wr.planner_calls) / len(wr.planner_calls)
        rows.append(AblationRow(spec.axis, value, wr.fraction, wr.wins, spec.n, mean_calls))
    table = AblationTable(rows, spec.level)
    if out:
        table.write(out)
    return table


def expected_calls(duration: int, period: int) -> int:
    """Periodic planner calls in a match with no threat or exhaustion replans."""
    return math.ceil(duration / period)
