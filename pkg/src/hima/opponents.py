"""Scripted built-in opponents graded over ten difficulty levels.

Each policy follows a per-race build plan shipped in ``data/plans``: an
opener, a worker and supply rule, expansion, a tech path, production
buildings and a weighted army composition. Difficulty scales how often the
policy acts, how many actions it issues per decision, how far it follows the
plan and when it attacks. The top three levels also cheat (full vision,
starting bank and income bonus).
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

from .textio import ActionRequest
from .world.catalog import ActionCatalog, load_catalog
from .world.engine import army_power, army_supply_value, check, enqueue, income_workers
from .world.types import FeasibilityKind, Observation, PlayerState, Race, Rules


class BadLevel(ValueError):
    pass


LEVEL_NAMES = {
    1: "Very Easy", 2: "Easy", 3: "Medium", 4: "Hard", 5: "Harder",
    6: "Very Hard", 7: "Elite", 8: "Cheat Vision", 9: "Cheat Money", 10: "Cheat Insane",
}


@dataclass(frozen=True)
class DifficultyLevel:
    level: int
    name: str
    cheat_vision: bool
    cheat_money: bool
    decision_period: int
    aggression_time: int


@lru_cache(maxsize=None)
def load_plan(race: Race) -> dict:
    race = Race.parse(race)
    text = resources.files("hima.data.plans").joinpath(f"{race.value}.json").read_text()
    doc = json.loads(text)
    if doc.get("format") != "hima-plans" or doc.get("race") != race.value:
        raise ValueError(f"bad plan file for {race.value}")
    return doc


def difficulty(level: int, race: "Race | str" = Race.Protoss) -> DifficultyLevel:
    if not isinstance(level, int) or isinstance(level, bool) or level not in LEVEL_NAMES:
        raise BadLevel(f"difficulty level must be 1..10, got {level!r}")
    params = load_plan(Race.parse(race))["levels"][str(level)]
    return DifficultyLevel(
        level=level,
        name=LEVEL_NAMES[level],
        cheat_vision=level in (8, 10),
        cheat_money=level in (9, 10),
        decision_period=int(params["decision_period"]),
        aggression_time=int(params["aggression_time"]),
    )


class BuiltinPolicy:
    """Rule-driven build-order player. ``decide`` never returns an action the
    observed state cannot afford or has not unlocked."""

    # how long a policy waits before re-issuing Attack while not engaged
    ATTACK_COOLDOWN = 30
    _rules = Rules()
    # informed policies (scouting or full vision) attack only when this much stronger
    ATTACK_MARGIN = 1.2
    MAXED_MARGIN = 1.02
    # ... and switch to army-first production when the enemy is this close
    DEFEND_RATIO = 0.8
    SCOUT_START = 180
    MAXED_SUPPLY = 190
    FRESH_INTEL = 10
    BANK_STRENGTH = 0.02

    def __init__(self, race, difficulty: Optional[DifficultyLevel], params: dict, style: str, seed: int = 0,
                 catalog: Optional[ActionCatalog] = None, label: Optional[str] = None):
        self.race = Race.parse(race)
        self.difficulty = difficulty
        self.catalog = catalog or load_catalog(self.race)
        plan = load_plan(self.race)
        self.roles = plan["roles"]
        self.defense = plan["defense"]
        self.opener = list(plan["opener"])
        self.style = style
        self.tech = list(plan["styles"][style]["tech"])[: params["tech_depth"]]
        self.production = list(plan["styles"][style]["production"])[: params["production_count"]]
        weights = plan["styles"][style]["army"]
        self.army_weights = {a: float(w) for a, w in weights.items() if a in self.catalog.by_id}
        self.params = dict(params)
        self.seed = seed
        self.label = label or (difficulty.name if difficulty else "builtin")
        self.last_decision: Optional[int] = None
        self.last_attack: Optional[int] = None
        self.opener_step = 0
        self.last_scout: Optional[int] = None
        self.enemy_power: Optional[float] = None
        self.intel_time: Optional[int] = None
        self.own_power_at_intel = 0.0
        self.defending = False
        self._capacity: dict = {}
        for aid in [*self.roles.values(), self.defense, *self.opener, *self.tech, *self.production, *self.army_weights]:
            if aid not in self.catalog.by_id:
                raise ValueError(f"plan action {aid} missing from {self.race.value} catalog")

    @property
    def period(self) -> int:
        return int(self.params["decision_period"])

    # ------------------------------------------------------------ helpers

    def _count(self, p: PlayerState, aid: str) -> int:
        """Owned plus queued instances of what ``aid`` produces."""
        spec = self.catalog.by_id[aid]
        target = spec.produces
        owned = p.units.get(target, 0) + p.buildings.get(target, 0) + (1 if target in p.techs else 0)
        return owned + sum(1 for q in p.queue if q.action_id == aid)

    def _queued(self, p: PlayerState, aid: str) -> int:
        return sum(1 for q in p.queue if q.action_id == aid)

    def _producer_backlog_ok(self, p: PlayerState, aid: str) -> bool:
        producer = self.catalog.by_id[aid].producer
        if producer is None:
            return True
        capacity = self._capacity.get(producer, 0)
        waiting = sum(1 for q in p.queue if self.catalog.by_id[q.action_id].producer == producer)
        return waiting < capacity + 1

    # ------------------------------------------------------------ candidates

    def _supply_wanted(self, p: PlayerState) -> bool:
        aid = self.roles["supply"]
        spec = self.catalog.by_id[aid]
        pending = self._queued(p, aid) * spec.supply_granted
        if p.supply_cap + pending >= 200:
            return False
        capacity = sum(self._capacity.values())
        margin = max(4, 2 * capacity)
        return p.supply_cap + pending - p.supply_used < margin and self._queued(p, aid) < 2

    def _worker_wanted(self, p: PlayerState) -> bool:
        aid = self.roles["worker"]
        halls = sum(p.buildings.get(h, 0) for h in self.catalog.townhalls)
        gases = sum(p.buildings.get(g, 0) for g in self.catalog.gas_buildings)
        limit = min(self.params["worker_target"], 16 * max(halls, 1) + 3 * gases)
        return self._count(p, aid) < limit and self._producer_backlog_ok(p, aid)

    def _expand_wanted(self, p: PlayerState) -> bool:
        aid = self.roles["townhall"]
        halls = self._count(p, aid)
        gases = sum(p.buildings.get(g, 0) for g in self.catalog.gas_buildings)
        workers = p.units.get(self.catalog.worker, 0)
        saturated = workers >= 16 * halls + 3 * gases - 2
        return halls < self.params["max_bases"] and saturated and self._queued(p, aid) == 0

    def _defense_wanted(self, p: PlayerState) -> bool:
        per_base = self.params.get("defense_per_base", 0)
        if per_base <= 0 or not (self.defending or p.supply_used >= self.MAXED_SUPPLY):
            return False
        halls = sum(p.buildings.get(h, 0) for h in self.catalog.townhalls)
        return self._count(p, self.defense) < per_base * halls

    def _gas_wanted(self, p: PlayerState) -> bool:
        aid = self.roles["gas"]
        halls = sum(p.buildings.get(h, 0) for h in self.catalog.townhalls)
        gases = self._count(p, aid)
        workers = p.units.get(self.catalog.worker, 0)
        return gases < self.params["gas_per_base"] * halls and workers >= 14 + 3 * gases

    def _candidates(self, p: PlayerState):
        if self._supply_wanted(p):
            yield self.roles["supply"]
        if self._worker_wanted(p):
            yield self.roles["worker"]
        while self.opener_step < len(self.opener) and self._count(p, self.opener[self.opener_step]) > 0:
            self.opener_step += 1
        if self.opener_step < len(self.opener):
            yield self.opener[self.opener_step]
            return
        if self._defense_wanted(p):
            yield self.defense
        if self.defending:
            yield from self._army_order(p)
        if self._expand_wanted(p):
            yield self.roles["townhall"]
        if self._gas_wanted(p):
            yield self.roles["gas"]
        for aid in self.tech:
            if self._count(p, aid) == 0:
                yield aid
                break
        wanted = {}
        for aid in self.production:
            wanted[aid] = wanted.get(aid, 0) + 1
            if self._count(p, aid) < wanted[aid]:
                yield aid
                break
        yield from self._army_order(p)

    def _army_order(self, p: PlayerState) -> list:
        """Unlocked army units, largest composition deficit first."""
        total_w = sum(self.army_weights.values())
        counts = {a: self._count(p, a) * max(self.catalog.by_id[a].supply_cost, 1) for a in self.army_weights}
        total = sum(counts.values())
        gas_flowing = income_workers(p, self.catalog, self._rules)[1] > 0
        ranked = []
        for i, (aid, w) in enumerate(self.army_weights.items()):
            if not self._producer_backlog_ok(p, aid):
                continue
            if check(p, self.catalog, aid).kind is FeasibilityKind.MissingPrerequisite:
                continue
            if not gas_flowing and self.catalog.by_id[aid].gas_cost > p.gas:
                continue  # would wait forever
            deficit = w / total_w - (counts[aid] / total if total else 0.0)
            ranked.append((-deficit, i, aid))
        return [aid for _, _, aid in sorted(ranked)]

    # ------------------------------------------------------------ attack rule

    def _update_intel(self, obs: Observation) -> None:
        enemy_cat = load_catalog(obs.opponent_race)
        if obs.opponent_full is not None:
            seen, when = obs.opponent_full.units, obs.time
            power = army_power(obs.opponent_full, enemy_cat)
            power += sum(obs.opponent_full.buildings.get(b, 0) * enemy_cat.strength_of(b, obs.opponent_full.techs)
                         for b in enemy_cat.defense_buildings)
            # an unspent bank turns into defenders within one production cycle
            power += self.BANK_STRENGTH * (obs.opponent_full.minerals + obs.opponent_full.gas)
        elif obs.opponent_units and (obs.engaged or self.last_scout is not None):
            seen = obs.opponent_units
            when = obs.time if obs.engaged else self.last_scout
            # enemy upgrades are invisible; assume they match ours
            base = sum(n * self.catalog.spec_for(u).strength for u, n in obs.own.units.items()
                       if u in self.catalog.by_produces)
            ratio = army_power(obs.own, self.catalog) / base if base > 0 else 1.0
            power = ratio * sum(n * enemy_cat.spec_for(u).strength for u, n in seen.items()
                                if u in enemy_cat.by_produces)
            power += sum(obs.opponent_buildings.get(b, 0) * enemy_cat.spec_for(b).strength
                         for b in enemy_cat.defense_buildings)
        else:
            return
        if self.intel_time is not None and when < self.intel_time:
            return
        if when != self.intel_time or obs.opponent_full is not None or obs.engaged:
            self.own_power_at_intel = army_power(obs.own, self.catalog)
        self.enemy_power = power
        self.intel_time = when

    def _enemy_estimate(self, obs: Observation) -> Optional[float]:
        """Last sighting, assuming the enemy has grown as much as we have since."""
        if self.enemy_power is None:
            return None
        if self.intel_time == obs.time:
            return self.enemy_power
        grown = army_power(obs.own, self.catalog) - self.own_power_at_intel
        return self.enemy_power + max(0.0, grown)

    @property
    def informed(self) -> bool:
        return self.params.get("scout_period", 0) > 0 or (self.difficulty is not None
                                                          and self.difficulty.cheat_vision)

    def _threatened(self, obs: Observation) -> bool:
        """Known enemy army is about as strong as ours: build army first."""
        enemy = self._enemy_estimate(obs) if self.informed else None
        if enemy is None:
            return False
        return enemy >= self.DEFEND_RATIO * army_power(obs.own, self.catalog)

    def _want_scout(self, obs: Observation) -> bool:
        period = self.params.get("scout_period", 0)
        if period <= 0 or obs.opponent_full is not None or obs.time < self.SCOUT_START:
            return False
        return self.last_scout is None or obs.time - self.last_scout >= period

    def _intel_stale(self, obs: Observation) -> bool:
        if self.params.get("scout_period", 0) <= 0 or obs.opponent_full is not None or obs.engaged:
            return False
        return self.intel_time is None or obs.time - self.intel_time > self.FRESH_INTEL

    def _want_attack(self, obs: Observation) -> bool:
        if obs.engagement_role == "defender":
            return False
        own = obs.own
        supply = army_supply_value(own, self.catalog)
        if supply <= 0:
            return False
        if obs.engagement_role == "attacker":
            return True  # reinforce with anything new
        maxed = own.supply_used >= self.MAXED_SUPPLY
        # late in the game a maxed army attacks regardless of odds
        if maxed and obs.time >= self.params.get("late_push", 0):
            return self.last_attack is None or obs.time - self.last_attack >= self.ATTACK_COOLDOWN
        if not maxed and (obs.time < self.params["aggression_time"] or supply < self.params["attack_supply"]):
            return False
        if self.last_attack is not None and obs.time - self.last_attack < self.ATTACK_COOLDOWN:
            return False
        enemy = self._enemy_estimate(obs) if self.informed else None
        if enemy is not None:
            margin = self.MAXED_MARGIN if maxed else self.ATTACK_MARGIN
            if army_power(own, self.catalog) < margin * enemy:
                return False
        return True

    # ------------------------------------------------------------ decision

    def due(self, time: int) -> bool:
        """Whether ``decide`` at ``time`` would do anything (lets callers skip observing)."""
        return self.last_decision is None or time - self.last_decision >= self.period

    def decide(self, obs: Observation) -> list:
        if not self.due(obs.time):
            return []
        self.last_decision = obs.time
        self._update_intel(obs)
        out = []
        if self._want_scout(obs):
            out.append(ActionRequest("Scout"))
            self.last_scout = obs.time
        self.defending = self._threatened(obs)
        if self._want_attack(obs):
            if self._intel_stale(obs):
                # look before leaping; the attack is reconsidered next decision
                if not out:
                    out.append(ActionRequest("Scout"))
                    self.last_scout = obs.time
            else:
                out.append(ActionRequest("Attack"))
                self.last_attack = obs.time
        scratch = obs.own.copy()
        # buildings do not change within one decision, so neither does capacity
        self._capacity = self.catalog.producer_capacity(scratch.buildings)
        for _ in range(int(self.params["actions_per_decision"])):
            chosen = self._pick(scratch)
            if chosen is None:
                break
            enqueue(scratch, self.catalog.by_id[chosen])
            out.append(ActionRequest(chosen))
        return out

    def _pick(self, scratch: PlayerState) -> Optional[str]:
        # The first candidate that cannot be afforded reserves its cost, so
        # cheaper lower-priority items only use what is left over.
        reserve_m = reserve_g = 0
        reserved = False
        for aid in self._candidates(scratch):
            feas = check(scratch, self.catalog, aid)
            if feas.kind in (FeasibilityKind.MissingPrerequisite, FeasibilityKind.SupplyBlocked):
                continue
            spec = self.catalog.by_id[aid]
            fits = scratch.minerals - spec.mineral_cost >= reserve_m and scratch.gas - spec.gas_cost >= reserve_g
            if feas.ok and fits:
                return aid
            if not reserved:
                reserve_m, reserve_g, reserved = spec.mineral_cost, spec.gas_cost, True
        return None

    def __repr__(self) -> str:
        return f"BuiltinPolicy({self.race.value}, {self.label}, style={self.style}, seed={self.seed})"


def _jitter(params: dict, rng: random.Random) -> dict:
    p = dict(params)
    p["aggression_time"] = max(0, p["aggression_time"] + rng.randint(-30, 30))
    p["attack_supply"] = max(2, p["attack_supply"] + rng.randint(-2, 2))
    return p


def make_builtin(race, level: int, seed: int = 0, style: Optional[str] = None) -> BuiltinPolicy:
    race = Race.parse(race)
    diff = difficulty(level, race)
    plan = load_plan(race)
    rng = random.Random(f"builtin:{race.value}:{level}:{seed}")
    params = _jitter(plan["levels"][str(level)], rng)
    styles = sorted(plan["styles"])
    chosen = style if style is not None else plan["builtin_style"]
    if chosen not in plan["styles"]:
        raise ValueError(f"unknown style {chosen!r}; expected one of {styles}")
    return BuiltinPolicy(race, diff, params, chosen, seed=seed)


def make_expert(race, style: str, seed: int = 0) -> BuiltinPolicy:
    """Strong fixed-style player used to generate demonstration replays."""
    race = Race.parse(race)
    plan = load_plan(race)
    if style not in plan["styles"]:
        raise ValueError(f"unknown style {style!r}")
    rng = random.Random(f"expert:{race.value}:{style}:{seed}")
    return BuiltinPolicy(race, None, _jitter(plan["expert"], rng), style, seed=seed, label=f"expert-{style}")


def styles(race) -> list:
    return sorted(load_plan(Race.parse(race))["styles"])


def decide(policy: BuiltinPolicy, obs: Observation) -> list:
    return policy.decide(obs)


__all__ = ["BadLevel", "BuiltinPolicy", "DifficultyLevel", "LEVEL_NAMES", "decide", "difficulty", "load_plan",
           "make_builtin", "make_expert", "styles"]
