"""Loading and validating the per-race action catalogs.

Catalog files are JSON lines: a header record carrying the format tag,
version and start position, then one record per action.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

from .types import ActionSpec, Category, Race

CATALOG_FORMAT = "hima-catalog"
CATALOG_VERSION = 1
EXPECTED_COUNTS = {Race.Protoss: 58, Race.Zerg: 61, Race.Terran: 62}


class CatalogError(ValueError):
    pass


class CatalogCountError(CatalogError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected {expected} actions, got {got}")
        self.expected = expected
        self.got = got


class CatalogCycleError(CatalogError):
    def __init__(self, path: list):
        super().__init__("cyclic prerequisites: " + " -> ".join(path))
        self.path = path


class CatalogRefError(CatalogError):
    def __init__(self, ref: str):
        super().__init__(f"dangling reference {ref!r}")
        self.ref = ref


class ActionCatalog:
    """Ordered action definitions of one race plus derived lookups."""

    def __init__(self, race: Race, actions: Iterable[ActionSpec], start: Optional[dict] = None):
        self.race = race
        self.actions: tuple[ActionSpec, ...] = tuple(actions)
        self.start = start or {}
        self.by_id = {a.id: a for a in self.actions}
        self.by_produces = {a.produces: a for a in self.actions if a.produces}
        self.order = {a.produces: i for i, a in enumerate(self.actions) if a.produces}
        self.action_order = {a.id: i for i, a in enumerate(self.actions)}
        self.unit_set = tuple(a.produces for a in self.actions if a.category is Category.UnitProduction)
        self.army_units = tuple(u for u in self.unit_set if self.by_produces[u].strength > 0)
        self.building_ids = tuple(a.produces for a in self.actions if a.category is Category.BuildingConstruction)
        self.tech_ids = tuple(a.produces for a in self.actions if a.category is Category.TechnologyDevelopment)
        self.defense_buildings = tuple(b for b in self.building_ids if self.by_produces[b].strength > 0)
        self.worker = next(u for u in self.unit_set if "worker" in self.by_produces[u].tags)
        self.townhalls = tuple(b for b in self.building_ids if "townhall" in self.by_produces[b].tags)
        self.gas_buildings = tuple(b for b in self.building_ids if "gas" in self.by_produces[b].tags)
        self.supply_providers = tuple(a.produces for a in self.actions if a.supply_granted > 0)
        self.entity_ids = frozenset(self.order)
        self._bonus_index = {}
        for a in self.actions:
            for target in a.bonus_targets:
                self._bonus_index.setdefault(target, []).append((a.produces, a.bonus_factor))

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __contains__(self, action_id: str) -> bool:
        return action_id in self.by_id

    def get(self, action_id: str) -> Optional[ActionSpec]:
        return self.by_id.get(action_id)

    def spec_for(self, entity: str) -> ActionSpec:
        return self.by_produces[entity]

    def kind_of(self, entity: str) -> Category:
        return self.by_produces[entity].category

    def strength_of(self, entity: str, techs=()) -> float:
        base = self.by_produces[entity].strength
        if not base:
            return 0.0
        bonus = sum(f for tech, f in self._bonus_index.get(entity, ()) if tech in techs)
        return base * (1.0 + bonus)

    def durability(self, building: str, per_cost: float) -> float:
        spec = self.by_produces[building]
        return (spec.mineral_cost + spec.gas_cost) * per_cost

    def producer_capacity(self, buildings: dict) -> dict:
        cap = {}
        for b, n in buildings.items():
            if n <= 0:
                continue
            spec = self.by_produces[b]
            if spec.slots:
                cap[b] = cap.get(b, 0) + spec.slots * n
            for target, extra in spec.extra_slots:
                cap[target] = cap.get(target, 0) + extra * n
        return cap

    def sort_entities(self, ids: Iterable[str]) -> list:
        return sorted(ids, key=lambda e: self.order.get(e, len(self.order)))

    def topological_order(self) -> list:
        return _toposort(self.actions, self.by_produces)


def _spec_from_record(rec: dict, race: Race) -> ActionSpec:
    bonus = rec.get("bonus") or {}
    return ActionSpec(
        id=rec["id"],
        race=race,
        category=Category(rec["category"]),
        mineral_cost=int(rec["mineral_cost"]),
        gas_cost=int(rec["gas_cost"]),
        supply_cost=int(rec["supply_cost"]),
        supply_granted=int(rec.get("supply_granted", 0)),
        build_time=int(rec["build_time"]),
        prerequisites=tuple(rec.get("prerequisites", ())),
        produces=rec.get("produces"),
        strength=float(rec.get("strength", 0.0)),
        domain=rec.get("domain", "none"),
        producer=rec.get("producer"),
        tags=frozenset(rec.get("tags", ())),
        slots=int(rec.get("slots", 0)),
        extra_slots=tuple(sorted((rec.get("extra_slots") or {}).items())),
        bonus_targets=tuple(bonus.get("targets", ())),
        bonus_factor=float(bonus.get("factor", 0.0)),
    )


def _toposort(actions, by_produces) -> list:
    """Depth-first topological sort over prerequisites; raises on cycles."""
    state = {}
    out = []

    def visit(spec, path):
        mark = state.get(spec.id)
        if mark == 2:
            return
        if mark == 1:
            start = path.index(spec.id)
            raise CatalogCycleError(path[start:] + [spec.id])
        state[spec.id] = 1
        path.append(spec.id)
        for pre in spec.prerequisites:
            visit(by_produces[pre], path)
        path.pop()
        state[spec.id] = 2
        out.append(spec)

    for a in actions:
        visit(a, [])
    return out


def _read_records(source) -> list:
    if isinstance(source, (list, tuple)):
        return [dict(r) for r in source]
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and source.endswith(".jsonl")):
        text = Path(source).read_text()
    else:
        text = str(source)
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def shipped_catalog_text(race: Race) -> str:
    return resources.files("hima.data.catalogs").joinpath(f"{race.value}.jsonl").read_text()


def load_catalog(race: "Race | str", source: Union[str, Path, list, None] = None) -> ActionCatalog:
    """Parse and validate a catalog document (the shipped file when ``source`` is None)."""
    race = Race.parse(race)
    if source is None:
        return _shipped(race)
    records = _read_records(source)
    if not records:
        raise CatalogError("empty catalog document")
    header, body = records[0], records[1:]
    if header.get("format") != CATALOG_FORMAT:
        raise CatalogError(f"missing {CATALOG_FORMAT!r} header")
    if int(header.get("version", -1)) != CATALOG_VERSION:
        raise CatalogError(f"unsupported catalog version {header.get('version')!r}")
    if Race.parse(header.get("race", race.value)) is not race:
        raise CatalogError(f"catalog is for {header.get('race')}, not {race.value}")

    specs = [_spec_from_record(r, race) for r in body]
    expected = EXPECTED_COUNTS[race]
    if len(specs) != expected:
        raise CatalogCountError(expected, len(specs))

    seen = set()
    for s in specs:
        if s.id in seen:
            raise CatalogError(f"duplicate action id {s.id!r}")
        seen.add(s.id)
        if not s.is_command and s.mineral_cost + s.gas_cost <= 0:
            raise CatalogError(f"{s.id}: non-command action must cost something")
        if s.build_time < 1:
            raise CatalogError(f"{s.id}: build_time must be >= 1")
    by_produces = {s.produces: s for s in specs if s.produces}
    for s in specs:
        for ref in s.prerequisites + ((s.producer,) if s.producer else ()) + s.bonus_targets:
            if ref not in by_produces:
                raise CatalogRefError(ref)
        for target, _ in s.extra_slots:
            if target not in by_produces:
                raise CatalogRefError(target)
    start = header.get("start", {})
    for ref in list(start.get("units", {})) + list(start.get("buildings", {})):
        if ref not in by_produces:
            raise CatalogRefError(ref)
    _toposort(specs, by_produces)
    if not any(not s.prerequisites for s in specs if not s.is_command):
        raise CatalogError("no bootstrap action with empty prerequisites")
    return ActionCatalog(race, specs, start)


@lru_cache(maxsize=None)
def _shipped(race: Race) -> ActionCatalog:
    return load_catalog(race, shipped_catalog_text(race))


def load_all() -> dict:
    return {r: load_catalog(r) for r in Race}
