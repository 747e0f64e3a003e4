"""Specialized imitation advisors.

The default advisor is a 1-nearest-neighbour lookup over its cluster's
demonstration samples: it finds the most similar recorded state and replays
the window of actions the expert issued from there. ``ExternalAdvisor`` asks
a language model over the wire protocol instead.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels, protocol
from .clustering import StrategicLabel, StrategicObjective
from .config import AgentConfig, FeatureScales
from .demos import INSTRUCTION, DemoSample, WindowStep
from .textio import parse_action_sequence, parse_state, render_observation
from .world.catalog import ActionCatalog, load_catalog
from .world.types import Observation, PlayerState, Race


class EmptyCluster(ValueError):
    def __init__(self, idx: int):
        super().__init__(f"cluster {idx} has no samples")
        self.idx = idx


@dataclass(frozen=True)
class Proposal:
    agent_id: int
    window: tuple  # of WindowStep, offsets nondecreasing
    tactical_rationale: str
    strategic_objective: str
    label: Optional[StrategicLabel] = None
    flags: tuple = ()

    @property
    def action_ids(self) -> list:
        return [s.action_id for s in self.window]


# ---------------------------------------------------------------- features

def _vector(minerals, gas, used, cap, units, buildings, techs, time, catalog: ActionCatalog,
            scales: FeatureScales, queue=()) -> np.ndarray:
    # counts and flags include what is already in production, so a state right
    # after an order differs from the one before it
    units, buildings, techs = dict(units), dict(buildings), set(techs)
    for aid in queue:
        spec = catalog.get(aid)
        if spec is None or spec.produces is None:
            continue
        if spec.produces in catalog.tech_ids:
            techs.add(spec.produces)
        elif spec.produces in buildings or spec.produces in catalog.building_ids:
            buildings[spec.produces] = buildings.get(spec.produces, 0) + 1
        else:
            units[spec.produces] = units.get(spec.produces, 0) + 1
    v = [minerals / scales.minerals, gas / scales.gas, used / scales.supply, cap / scales.supply]
    v += [units.get(u, 0) / scales.unit_count for u in catalog.unit_set]
    v += [buildings.get(b, 0) / scales.building_count for b in catalog.building_ids]
    v += [1.0 if t in techs else 0.0 for t in catalog.tech_ids]
    v.append(time / scales.game_time)
    return np.asarray(v, dtype=np.float64)


def state_features(p: PlayerState, time: int, catalog: Optional[ActionCatalog] = None,
                   scales: FeatureScales = FeatureScales()) -> np.ndarray:
    catalog = catalog or load_catalog(p.race)
    return _vector(p.minerals, p.gas, p.supply_used, p.supply_cap, p.units, p.buildings, p.techs, time,
                   catalog, scales, [q.action_id for q in p.queue])


def text_features(text: str, catalog: ActionCatalog, scales: FeatureScales = FeatureScales()) -> np.ndarray:
    s = parse_state(text)
    return _vector(s["minerals"], s["gas"], s["supply_used"], s["supply_cap"], s["units"], s["buildings"],
                   set(s["techs"]), s["time"], catalog, scales, [aid for aid, _ in s["queue"]])


# ---------------------------------------------------------------- retrieval advisors

class RetrievalAdvisor:
    def __init__(self, agent_id: int, objective: StrategicObjective, samples: Sequence[DemoSample],
                 catalog: ActionCatalog, scales: FeatureScales = FeatureScales()):
        if not samples:
            raise EmptyCluster(objective.cluster)
        self.agent_id = agent_id
        self.objective = objective
        self.samples = list(samples)
        self.catalog = catalog
        self.scales = scales
        self.matrix = np.vstack([text_features(s.state_text, catalog, scales) for s in self.samples])

    def __len__(self) -> int:
        return len(self.samples)

    def nearest(self, features: np.ndarray) -> int:
        return _kernels.nearest_index(self.matrix, features)

    def propose(self, obs: Observation) -> Proposal:
        idx = self.nearest(state_features(obs.own, obs.time, self.catalog, self.scales))
        sample = self.samples[idx]
        return Proposal(self.agent_id, tuple(sample.window), sample.rationale, self.objective.prompt_text,
                        self.objective.label)


class ExternalAdvisor:
    """Advisor backed by an external agent; the SO goes into its system prompt."""

    def __init__(self, agent_id: int, objective: StrategicObjective, race, endpoint,
                 agent: AgentConfig = AgentConfig(), window_seconds: int = 180):
        self.agent_id = agent_id
        self.objective = objective
        self.race = Race.parse(race)
        self.catalog = load_catalog(self.race)
        self.endpoint = endpoint
        self.agent = agent
        self.window_seconds = window_seconds

    def system_prompt(self) -> str:
        return INSTRUCTION.format(race=self.race.value.capitalize(),
                                  strategic_objective=self.objective.prompt_text, window=self.window_seconds)

    def propose(self, obs: Observation) -> Proposal:
        return external_exchange(self.endpoint, self.system_prompt(), render_observation(obs, self.catalog),
                                 self.agent, self.catalog, self.agent_id, self.objective)


def external_exchange(endpoint, system_prompt: str, state_text: str, params: AgentConfig = AgentConfig(),
                      catalog: Optional[ActionCatalog] = None, agent_id: int = 0,
                      objective: Optional[StrategicObjective] = None, race=Race.Protoss) -> Proposal:
    catalog = catalog or load_catalog(race)
    request = protocol.make_request(system_prompt, state_text, params.temperature, params.max_actions)
    text = protocol.exchange(endpoint, request, params.timeout)
    actions, issues = parse_action_sequence(text, catalog)
    if not actions:
        raise protocol.MalformedReply(f"no actions recoverable from reply ({', '.join(map(str, issues))})")
    actions = actions[: params.max_actions]
    steps = sorted((WindowStep(a.action_id, a.offset) for a in actions), key=lambda s: s.offset)
    base = steps[0].offset
    steps = tuple(WindowStep(s.action_id, s.offset - base) for s in steps)
    return Proposal(agent_id, steps, text, objective.prompt_text if objective else system_prompt,
                    objective.label if objective else None, tuple(str(i) for i in issues))


# ---------------------------------------------------------------- pool

@dataclass
class AdvisorPool:
    advisors: list
    catalog: ActionCatalog

    @property
    def k(self) -> int:
        return len(self.advisors)

    def propose_all(self, obs: Observation, concurrent: bool = False) -> list:
        if concurrent and self.k > 1:
            with ThreadPoolExecutor(max_workers=self.k) as ex:
                return list(ex.map(lambda a: a.propose(obs), self.advisors))
        return [a.propose(obs) for a in self.advisors]

    def subset(self, ids: Sequence[int]) -> "AdvisorPool":
        return AdvisorPool([a for a in self.advisors if a.agent_id in set(ids)], self.catalog)


def build_pool(model, samples: Sequence[DemoSample], objectives: Sequence[StrategicObjective],
               catalog: Optional[ActionCatalog] = None, scales: FeatureScales = FeatureScales()) -> AdvisorPool:
    catalog = catalog or load_catalog(model.race)
    buckets = {i: [] for i in range(model.k)}
    for s in samples:
        if s.cluster_id is None:
            raise ValueError(f"sample {s.source} has no cluster id")
        buckets[s.cluster_id].append(s)
    for i in range(model.k):
        if not buckets[i]:
            raise EmptyCluster(i)
    by_cluster = {o.cluster: o for o in objectives}
    advisors = [RetrievalAdvisor(i, by_cluster[i], buckets[i], catalog, scales) for i in range(model.k)]
    return AdvisorPool(advisors, catalog)
