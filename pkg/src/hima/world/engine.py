"""State transitions of the macro simulator.

Public operations (``validate_action``, ``apply_action``, ``tick``) return new
states and never mutate their inputs. The ``*_inplace`` variants are what the
match loop uses to avoid copying the world every second.
"""
from __future__ import annotations

from typing import Optional, Sequence

from .catalog import ActionCatalog, load_catalog
from .combat import EPS, lanchester_round, pay_damage, power
from .types import (
    Category, Engagement, Feasibility, FeasibilityKind, GameState, Observation, Outcome, PlayerState, QueueEntry,
    Race, Rules,
)


class ApplyOnInfeasible(RuntimeError):
    pass


class TickAfterTerminal(RuntimeError):
    pass


# ---------------------------------------------------------------- setup

def new_player(catalog: ActionCatalog, rules: Rules, cheat_money: bool = False) -> PlayerState:
    start = catalog.start
    p = PlayerState(race=catalog.race)
    p.minerals = p.start_minerals = int(start.get("minerals", 0))
    p.gas = p.start_gas = int(start.get("gas", 0))
    p.units = {u: int(n) for u, n in start.get("units", {}).items()}
    p.buildings = {b: int(n) for b, n in start.get("buildings", {}).items()}
    p.supply_used = sum(catalog.spec_for(u).supply_cost * n for u, n in p.units.items())
    if cheat_money:
        p.minerals += rules.cheat_bank
        p.gas += rules.cheat_bank
        p.injected_minerals = p.injected_gas = rules.cheat_bank
        p.income_pct = rules.cheat_income_pct
    recompute_cap(p, catalog, rules)
    return p


def new_game(races: Sequence, seed: int = 0, rules: Optional[Rules] = None, catalogs: Optional[Sequence] = None,
             cheat_money: Sequence[bool] = (False, False)) -> GameState:
    rules = rules or Rules()
    races = [Race.parse(r) for r in races]
    if catalogs is None:
        catalogs = [load_catalog(r) for r in races]
    players = [new_player(c, rules, m) for c, m in zip(catalogs, cheat_money)]
    return GameState(tick=0, players=players, catalogs=tuple(catalogs), rng_seed=int(seed), rules=rules)


# ---------------------------------------------------------------- player-level primitives

def recompute_cap(p: PlayerState, catalog: ActionCatalog, rules: Rules) -> None:
    granted = 0
    for e in catalog.supply_providers:
        n = p.buildings.get(e, 0) + p.units.get(e, 0)
        if n:
            granted += n * catalog.spec_for(e).supply_granted
    # losing a supply structure never evicts units already paid for
    p.supply_cap = min(rules.supply_max, max(granted, p.supply_used))


def check(p: PlayerState, catalog: ActionCatalog, action_id: str) -> Feasibility:
    spec = catalog.get(action_id)
    if spec is None:
        return Feasibility.UNKNOWN
    if spec.prerequisites:
        missing = [e for e in spec.prerequisites if not p.has(e)]
        if missing:
            return Feasibility(FeasibilityKind.MissingPrerequisite, tuple(catalog.sort_entities(missing)))
    if p.minerals < spec.mineral_cost or p.gas < spec.gas_cost:
        return Feasibility.INSUFFICIENT
    if spec.supply_cost and p.supply_used + spec.supply_cost > p.supply_cap:
        return Feasibility.SUPPLY_BLOCKED
    return Feasibility.OK


def enqueue(p: PlayerState, spec) -> None:
    """Pay for a validated non-command action and append it to the queue."""
    p.minerals -= spec.mineral_cost
    p.gas -= spec.gas_cost
    p.spent_minerals += spec.mineral_cost
    p.spent_gas += spec.gas_cost
    p.supply_used += spec.supply_cost
    p.queue.append(QueueEntry(spec.id, spec.build_time))


def income_workers(p: PlayerState, catalog: ActionCatalog, rules: Rules) -> tuple:
    workers = p.units.get(catalog.worker, 0)
    halls = sum(p.buildings.get(b, 0) for b in catalog.townhalls)
    gas_b = sum(p.buildings.get(b, 0) for b in catalog.gas_buildings)
    mineral_w = min(workers, rules.workers_per_townhall * halls)
    gas_w = min(workers - mineral_w, rules.workers_per_gas * gas_b)
    return mineral_w, gas_w


def economy_second(p: PlayerState, catalog: ActionCatalog, rules: Rules) -> list:
    """Advance one player's income and production by one second.

    Returns the list of action ids whose queue entries completed.
    """
    mineral_w, gas_w = income_workers(p, catalog, rules)
    if mineral_w:
        p.carry_minerals += mineral_w * rules.mineral_rate_centi * p.income_pct // 100
        gained, p.carry_minerals = divmod(p.carry_minerals, 100)
        p.minerals += gained
        p.harvested_minerals += gained
    if gas_w:
        p.carry_gas += gas_w * rules.gas_rate_centi * p.income_pct // 100
        gained, p.carry_gas = divmod(p.carry_gas, 100)
        p.gas += gained
        p.harvested_gas += gained

    if not p.queue:
        return []
    capacity = catalog.producer_capacity(p.buildings)
    used = {}
    done = []
    for entry in p.queue:
        spec = catalog.by_id[entry.action_id]
        producer = spec.producer
        if producer is not None:
            if used.get(producer, 0) >= capacity.get(producer, 0):
                continue
            used[producer] = used.get(producer, 0) + 1
        entry.remaining -= 1
        if entry.remaining <= 0:
            done.append(entry)
    if not done:
        return []
    p.queue = [e for e in p.queue if e.remaining > 0]
    grants = False
    for entry in done:
        spec = catalog.by_id[entry.action_id]
        target = spec.produces
        if spec.category is Category.UnitProduction:
            p.units[target] = p.units.get(target, 0) + 1
        elif spec.category is Category.BuildingConstruction:
            p.buildings[target] = p.buildings.get(target, 0) + 1
        else:
            p.techs.add(target)
        grants = grants or spec.supply_granted > 0
    if grants:
        recompute_cap(p, catalog, rules)
    return [e.action_id for e in done]


def army_supply_value(p: PlayerState, catalog: ActionCatalog) -> int:
    return sum(p.units.get(u, 0) * catalog.spec_for(u).supply_cost for u in catalog.army_units)


def army_power(p: PlayerState, catalog: ActionCatalog) -> float:
    return sum(n * catalog.strength_of(u, p.techs) for u, n in p.units.items()
               if n > 0 and u in catalog.by_produces and catalog.spec_for(u).strength > 0)


# ---------------------------------------------------------------- game-level operations

def validate_action(state: GameState, player: int, action_id: str) -> Feasibility:
    if player not in (0, 1):
        raise IndexError(f"bad player index {player}")
    return check(state.players[player], state.catalogs[player], action_id)


def apply_action_inplace(state: GameState, player: int, action_id: str) -> None:
    feas = validate_action(state, player, action_id)
    if not feas.ok:
        raise ApplyOnInfeasible(f"{action_id} for player {player}: {feas}")
    catalog = state.catalogs[player]
    spec = catalog.by_id[action_id]
    if spec.is_command:
        _command(state, player, spec.id)
    else:
        enqueue(state.players[player], spec)


def apply_action(state: GameState, player: int, action_id: str) -> GameState:
    new = state.copy()
    apply_action_inplace(new, player, action_id)
    return new


def _command(state: GameState, player: int, command: str) -> None:
    me = state.players[player]
    catalog = state.catalogs[player]
    if command == "Scout":
        opp = state.players[1 - player]
        state.scouts = list(state.scouts)
        state.scouts[player] = (state.tick, {u: n for u, n in opp.units.items() if n},
                                {b: n for b, n in opp.buildings.items() if n})
        return
    if command != "Attack":
        return
    eng = state.engagement
    if eng is not None and eng.attacker != player:
        return
    committed = eng.committed if eng is not None else {}
    fresh = {}
    for u in catalog.army_units:
        free = me.units.get(u, 0) - committed.get(u, 0)
        if free > 0:
            fresh[u] = free
    if not fresh:
        return
    if eng is None:
        state.engagement = Engagement(attacker=player, start_tick=state.tick, committed=fresh)
    else:
        for u, n in fresh.items():
            eng.committed[u] = eng.committed.get(u, 0) + n


def _defender_army(p: PlayerState, catalog: ActionCatalog) -> dict:
    army = {u: p.units[u] for u in catalog.army_units if p.units.get(u, 0) > 0}
    for b in catalog.defense_buildings:
        if p.buildings.get(b, 0) > 0:
            army[b] = p.buildings[b]
    return army


def _combat_round(state: GameState) -> None:
    eng = state.engagement
    rules = state.rules
    a_idx = eng.attacker
    d_idx = 1 - a_idx
    att, dfd = state.players[a_idx], state.players[d_idx]
    cat_a, cat_d = state.catalogs[a_idx], state.catalogs[d_idx]
    army_a = {u: min(n, att.units.get(u, 0)) for u, n in eng.committed.items()}
    army_a = {u: n for u, n in army_a.items() if n > 0}
    str_a = {u: cat_a.strength_of(u, att.techs) for u in army_a}
    if power(army_a, str_a) <= EPS:
        state.engagement = None
        return
    army_d = _defender_army(dfd, cat_d)
    str_d = {u: cat_d.strength_of(u, dfd.techs) for u in army_d}
    eng.rounds += 1
    event = {"t": state.tick, "attacker": a_idx, "attacker_losses": {}, "defender_losses": {}, "destroyed": {}}
    if power(army_d, str_d) > EPS:
        loss_a, loss_d, eng.carry_attacker, eng.carry_defender = lanchester_round(
            army_a, army_d, str_a, str_d, eng.carry_attacker, eng.carry_defender, rules.attrition,
            cat_a.order, cat_d.order)
        for u, n in loss_a.items():
            att.units[u] -= n
            eng.committed[u] -= n
            att.supply_used -= cat_a.spec_for(u).supply_cost * n
        for e, n in loss_d.items():
            if cat_d.kind_of(e) is Category.UnitProduction:
                dfd.units[e] -= n
                dfd.supply_used -= cat_d.spec_for(e).supply_cost * n
            else:
                dfd.buildings[e] -= n
        event["attacker_losses"] = loss_a
        event["defender_losses"] = loss_d
    else:
        eng.carry_raid += rules.attrition * power(army_a, str_a)
        durab = {b: cat_d.durability(b, rules.durability_per_cost) for b, n in dfd.buildings.items() if n > 0}
        targets = {b: dfd.buildings[b] for b in durab}
        destroyed, eng.carry_raid = pay_damage(targets, durab, eng.carry_raid, cat_d.order)
        for b, n in destroyed.items():
            dfd.buildings[b] -= n
        event["destroyed"] = destroyed
    recompute_cap(att, cat_a, rules)
    recompute_cap(dfd, cat_d, rules)
    state.battle_log.append(event)
    if not any(n > 0 for n in army_a.values()):
        state.engagement = None


def _terminal_check(state: GameState) -> None:
    dead = [sum(p.buildings.values()) <= 0 for p in state.players]
    if dead[0] and dead[1]:
        state.outcome, state.winner = Outcome.Draw, None
    elif dead[0] or dead[1]:
        state.outcome, state.winner = Outcome.Win, (1 if dead[0] else 0)
    elif state.tick >= state.rules.time_cap:
        v0 = army_supply_value(state.players[0], state.catalogs[0])
        v1 = army_supply_value(state.players[1], state.catalogs[1])
        if v0 == v1:
            state.outcome, state.winner = Outcome.Draw, None
        else:
            state.outcome, state.winner = Outcome.Win, (0 if v0 > v1 else 1)


def tick_inplace(state: GameState, dt: int = 1) -> list:
    """Advance ``dt`` seconds in place; returns per-second completion lists."""
    if not state.ongoing:
        raise TickAfterTerminal(f"game already ended at t={state.tick}")
    if dt < 1:
        raise ValueError("dt must be >= 1")
    completed = []
    for _ in range(dt):
        state.tick += 1
        done = []
        for i, p in enumerate(state.players):
            done.append(economy_second(p, state.catalogs[i], state.rules))
        completed.append(done)
        eng = state.engagement
        if eng is not None and (state.tick - eng.start_tick) % state.rules.combat_period == 0:
            _combat_round(state)
        _terminal_check(state)
        if not state.ongoing:
            break
    return completed


def tick(state: GameState, dt: int = 1) -> GameState:
    new = state.copy()
    tick_inplace(new, dt)
    return new


# ---------------------------------------------------------------- observation

def observe(state: GameState, player: int, cheat_vision: bool = False, recent_events: int = 5) -> Observation:
    if player not in (0, 1):
        raise IndexError(f"bad player index {player}")
    me = state.players[player]
    opp = state.players[1 - player]
    cat_o = state.catalogs[1 - player]
    obs = Observation(time=state.tick, player=player, own=me.copy(), opponent_race=opp.race)
    if cheat_vision:
        obs.opponent_full = opp.copy()
        obs.opponent_units = {u: n for u, n in opp.units.items() if n > 0}
        obs.opponent_buildings = {b: n for b, n in opp.buildings.items() if n > 0}
    else:
        units, buildings = {}, {}
        eng = state.engagement
        if eng is not None:
            if eng.attacker == player:
                for u in cat_o.unit_set:
                    if opp.units.get(u, 0) > 0 and cat_o.spec_for(u).strength > 0:
                        units[u] = opp.units[u]
                buildings = {b: n for b, n in opp.buildings.items() if n > 0}
            else:
                units = {u: min(n, opp.units.get(u, 0)) for u, n in eng.committed.items()}
                units = {u: n for u, n in units.items() if n > 0}
        scout = state.scouts[player]
        if scout is not None and state.tick - scout[0] <= state.rules.scout_window:
            for u, n in scout[1].items():
                units[u] = max(units.get(u, 0), n)
            for b, n in scout[2].items():
                buildings[b] = max(buildings.get(b, 0), n)
        obs.opponent_units = units
        obs.opponent_buildings = buildings
    if state.engagement is not None:
        obs.engagement_role = "attacker" if state.engagement.attacker == player else "defender"
    obs.visible_enemy_count = sum(n for u, n in obs.opponent_units.items()
                                  if u in cat_o.by_produces and cat_o.spec_for(u).strength > 0
                                  and cat_o.kind_of(u) is Category.UnitProduction)
    if recent_events:
        obs.battle_events = [e for e in state.battle_log[-recent_events:]]
    return obs
