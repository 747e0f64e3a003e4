"""Demonstrations to advisors: expert replays, samples, clusters and the pool."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from ..advisors import AdvisorPool, build_pool
from ..clustering import ClusterModel, assign_strategic_objective, cluster_replays
from ..config import Settings
from ..demos import EmptyReplay, attach_rationale, extract_samples
from ..opponents import styles
from ..world.catalog import load_catalog
from ..world.types import Race
from .match import Builtin, Expert, MatchConfig, run_match

OPPONENT_RACES = ("protoss", "terran", "zerg")
OPPONENT_LEVELS = (3, 4, 5, 6)


@dataclass
class PipelineResult:
    logs: list
    samples: list
    model: ClusterModel
    objectives: list
    pool: AdvisorPool


def expert_replays(race, n_per_style: int = 6, seed_base: int = 1000, time_cap: int = 3600) -> list:
    """Expert games of every style against assorted builtin opponents."""
    race = Race.parse(race)
    logs = []
    for style in styles(race):
        for i in range(n_per_style):
            seed = seed_base + i
            opp_race = OPPONENT_RACES[i % len(OPPONENT_RACES)]
            level = OPPONENT_LEVELS[i % len(OPPONENT_LEVELS)]
            res = run_match(MatchConfig((Expert(style), Builtin(level)), (race.value, opp_race), seed, time_cap,
                                        record_replay=True))
            res.replay.meta["id"] = f"{race.value}-{style}-{seed}"
            res.replay.meta["style"] = style
            logs.append(res.replay)
    return logs


def samples_for(logs, model: ClusterModel, settings: Settings = Settings()) -> list:
    """Samples of every clustered (winning) side, tagged with its cluster."""
    out = []
    for log in logs:
        for player, race in enumerate(log.meta["races"]):
            key = f"{log.replay_id}:{player}"
            if key not in model.assignments:
                continue
            try:
                samples = extract_samples(log, settings.demos, player)
            except EmptyReplay:
                continue
            cid = model.assignments[key]
            out += [dataclasses.replace(attach_rationale(s, settings.demos, settings.agent), cluster_id=cid)
                    for s in samples]
    return out


def build_from_logs(logs, race, settings: Settings = Settings()) -> PipelineResult:
    catalog = load_catalog(race)
    cc = settings.clustering
    model = cluster_replays(logs, catalog, cc.k, cc.seed, settings.demos.winners_only, cc.max_iter)
    objectives = assign_strategic_objective(model, catalog, cc.dominance_threshold)
    samples = samples_for(logs, model, settings)
    pool = build_pool(model, samples, objectives, catalog, settings.features)
    return PipelineResult(list(logs), samples, model, objectives, pool)


def run_pipeline(race="protoss", n_per_style: int = 6, seed_base: int = 1000,
                 settings: Optional[Settings] = None) -> PipelineResult:
    settings = settings or Settings()
    return build_from_logs(expert_replays(race, n_per_style, seed_base), race, settings)


@lru_cache(maxsize=8)
def default_pool(race="protoss", n_per_style: int = 6, seed_base: int = 1000) -> AdvisorPool:
    """The advisor pool built with default settings (cached per process)."""
    return run_pipeline(race, n_per_style, seed_base).pool
