"""Deterministic discrete-tick macro simulator."""
from .catalog import (
    ActionCatalog, CatalogCountError, CatalogCycleError, CatalogError, CatalogRefError, load_all, load_catalog,
)
from .combat import CombatResult, EmptyArmy, resolve_combat
from .engine import (
    ApplyOnInfeasible, TickAfterTerminal, apply_action, apply_action_inplace, army_supply_value, check, enqueue,
    economy_second, new_game, new_player, observe, tick, tick_inplace, validate_action,
)
from .types import (
    ActionSpec, Category, Engagement, Feasibility, FeasibilityKind, GameState, Observation, Outcome, PlayerState,
    QueueEntry, Race, Rules,
)

__all__ = [
    "ActionCatalog", "ActionSpec", "ApplyOnInfeasible", "CatalogCountError", "CatalogCycleError", "CatalogError",
    "CatalogRefError", "Category", "CombatResult", "EmptyArmy", "Engagement", "Feasibility", "FeasibilityKind",
    "GameState", "Observation", "Outcome", "PlayerState", "QueueEntry", "Race", "Rules", "TickAfterTerminal",
    "apply_action", "apply_action_inplace", "army_supply_value", "check", "economy_second", "enqueue", "load_all",
    "load_catalog", "new_game", "new_player", "observe", "resolve_combat", "tick", "tick_inplace",
    "validate_action",
]
