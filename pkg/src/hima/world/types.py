from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional


class Race(enum.Enum):
    Protoss = "protoss"
    Terran = "terran"
    Zerg = "zerg"

    @classmethod
    def parse(cls, value: "str | Race") -> "Race":
        if isinstance(value, Race):
            return value
        for race in cls:
            if race.value == str(value).lower():
                return race
        raise ValueError(f"unknown race {value!r}")


class Category(enum.Enum):
    UnitProduction = "UnitProduction"
    BuildingConstruction = "BuildingConstruction"
    TechnologyDevelopment = "TechnologyDevelopment"
    GeneralCommand = "GeneralCommand"


@dataclass(frozen=True)
class ActionSpec:
    id: str
    race: Race
    category: Category
    mineral_cost: int
    gas_cost: int
    supply_cost: int
    supply_granted: int
    build_time: int
    prerequisites: tuple[str, ...]
    produces: Optional[str]
    strength: float
    domain: str = "none"
    producer: Optional[str] = None
    tags: frozenset = frozenset()
    slots: int = 0
    extra_slots: tuple[tuple[str, int], ...] = ()
    bonus_targets: tuple[str, ...] = ()
    bonus_factor: float = 0.0

    @property
    def is_command(self) -> bool:
        return self.category is Category.GeneralCommand


class FeasibilityKind(enum.Enum):
    Ok = "Ok"
    MissingPrerequisite = "MissingPrerequisite"
    InsufficientResources = "InsufficientResources"
    SupplyBlocked = "SupplyBlocked"
    UnknownAction = "UnknownAction"


@dataclass(frozen=True)
class Feasibility:
    kind: FeasibilityKind
    missing: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.kind is FeasibilityKind.Ok

    def __str__(self) -> str:
        if self.kind is FeasibilityKind.MissingPrerequisite:
            return f"MissingPrerequisite({', '.join(self.missing)})"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "Feasibility":
        text = text.strip()
        if text.startswith("MissingPrerequisite(") and text.endswith(")"):
            inner = text[len("MissingPrerequisite("):-1]
            return cls(FeasibilityKind.MissingPrerequisite, tuple(s.strip() for s in inner.split(",") if s.strip()))
        return cls(FeasibilityKind(text))


Feasibility.OK = Feasibility(FeasibilityKind.Ok)
Feasibility.INSUFFICIENT = Feasibility(FeasibilityKind.InsufficientResources)
Feasibility.SUPPLY_BLOCKED = Feasibility(FeasibilityKind.SupplyBlocked)
Feasibility.UNKNOWN = Feasibility(FeasibilityKind.UnknownAction)


@dataclass(slots=True)
class QueueEntry:
    action_id: str
    remaining: int


@dataclass(slots=True)
class PlayerState:
    """Economy, entities and production queue of one player.

    Resources are whole units; fractional income is carried in hundredths
    (``carry_minerals`` / ``carry_gas``) so the bank stays integral and the
    conservation equation holds exactly.
    """

    race: Race
    minerals: int = 0
    gas: int = 0
    supply_used: int = 0
    supply_cap: int = 0
    units: dict = field(default_factory=dict)
    buildings: dict = field(default_factory=dict)
    techs: set = field(default_factory=set)
    queue: list = field(default_factory=list)
    spent_minerals: int = 0
    spent_gas: int = 0
    harvested_minerals: int = 0
    harvested_gas: int = 0
    start_minerals: int = 0
    start_gas: int = 0
    injected_minerals: int = 0
    injected_gas: int = 0
    income_pct: int = 100
    carry_minerals: int = 0
    carry_gas: int = 0

    def copy(self) -> "PlayerState":
        return PlayerState(
            self.race, self.minerals, self.gas, self.supply_used, self.supply_cap,
            dict(self.units), dict(self.buildings), set(self.techs),
            [QueueEntry(q.action_id, q.remaining) for q in self.queue],
            self.spent_minerals, self.spent_gas, self.harvested_minerals, self.harvested_gas,
            self.start_minerals, self.start_gas, self.injected_minerals, self.injected_gas,
            self.income_pct, self.carry_minerals, self.carry_gas,
        )

    def has(self, entity: str) -> bool:
        return self.units.get(entity, 0) > 0 or self.buildings.get(entity, 0) > 0 or entity in self.techs

    def to_dict(self) -> dict:
        return {
            "race": self.race.value,
            "minerals": self.minerals,
            "gas": self.gas,
            "supply_used": self.supply_used,
            "supply_cap": self.supply_cap,
            "units": {k: v for k, v in self.units.items() if v},
            "buildings": {k: v for k, v in self.buildings.items() if v},
            "techs": sorted(self.techs),
            "queue": [[q.action_id, q.remaining] for q in self.queue],
            "spent": [self.spent_minerals, self.spent_gas],
            "harvested": [self.harvested_minerals, self.harvested_gas],
            "start": [self.start_minerals, self.start_gas],
            "injected": [self.injected_minerals, self.injected_gas],
            "income_pct": self.income_pct,
            "carry": [self.carry_minerals, self.carry_gas],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlayerState":
        return cls(
            Race.parse(d["race"]), d["minerals"], d["gas"], d["supply_used"], d["supply_cap"],
            dict(d["units"]), dict(d["buildings"]), set(d["techs"]),
            [QueueEntry(a, r) for a, r in d["queue"]],
            *d["spent"], *d["harvested"], *d["start"], *d["injected"],
            d["income_pct"], *d["carry"],
        )


class Outcome(enum.Enum):
    Ongoing = "ongoing"
    Win = "win"
    Draw = "draw"


@dataclass
class Engagement:
    attacker: int
    start_tick: int
    committed: dict
    carry_attacker: float = 0.0
    carry_defender: float = 0.0
    carry_raid: float = 0.0
    rounds: int = 0

    def copy(self) -> "Engagement":
        return Engagement(self.attacker, self.start_tick, dict(self.committed), self.carry_attacker,
                          self.carry_defender, self.carry_raid, self.rounds)


@dataclass(frozen=True)
class Rules:
    """Simulator constants. Income is expressed in hundredths per worker-second."""

    time_cap: int = 3600
    mineral_rate_centi: int = 100
    gas_rate_centi: int = 90
    workers_per_townhall: int = 16
    workers_per_gas: int = 3
    combat_period: int = 5
    attrition: float = 0.1
    scout_window: int = 60
    durability_per_cost: float = 1 / 50
    cheat_bank: int = 1000
    cheat_income_pct: int = 150
    supply_max: int = 200


@dataclass
class GameState:
    tick: int
    players: list
    catalogs: tuple
    rng_seed: int = 0
    rules: Rules = field(default_factory=Rules)
    engagement: Optional[Engagement] = None
    outcome: Outcome = Outcome.Ongoing
    winner: Optional[int] = None
    # per player: (tick of scout, snapshot of opponent units, snapshot of opponent buildings)
    scouts: list = field(default_factory=lambda: [None, None])
    battle_log: list = field(default_factory=list)

    def copy(self) -> "GameState":
        return GameState(
            self.tick, [p.copy() for p in self.players], self.catalogs, self.rng_seed, self.rules,
            self.engagement.copy() if self.engagement else None, self.outcome, self.winner,
            list(self.scouts), list(self.battle_log),
        )

    @property
    def ongoing(self) -> bool:
        return self.outcome is Outcome.Ongoing

    def to_dict(self) -> dict:
        eng = None
        if self.engagement is not None:
            e = self.engagement
            eng = {"attacker": e.attacker, "start": e.start_tick, "committed": dict(sorted(e.committed.items())),
                   "carry": [e.carry_attacker, e.carry_defender, e.carry_raid], "rounds": e.rounds}
        return {
            "tick": self.tick,
            "players": [p.to_dict() for p in self.players],
            "engagement": eng,
            "seed": self.rng_seed,
            "outcome": self.outcome.value,
            "winner": self.winner,
        }


@dataclass
class Observation:
    time: int
    player: int
    own: PlayerState
    opponent_race: Race
    opponent_units: dict = field(default_factory=dict)
    opponent_buildings: dict = field(default_factory=dict)
    opponent_full: Optional[PlayerState] = None
    visible_enemy_count: int = 0
    engagement_role: Optional[str] = None  # "attacker" | "defender" | None
    battle_events: list = field(default_factory=list)

    @property
    def engaged(self) -> bool:
        return self.engagement_role is not None

    @property
    def race(self) -> Race:
        return self.own.race
