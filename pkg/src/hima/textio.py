"""Text rendering of observations and planner context, and lenient parsing of
agent-written action sequences.

The observation layout is a fixed list of ``[section]`` blocks; golden files
under ``tests/golden`` pin it byte for byte.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .world.catalog import ActionCatalog, load_catalog
from .world.types import Observation, PlayerState

SECTIONS = ("time", "resources", "supply", "units", "buildings", "technologies", "ongoing_commands",
            "visible_enemy")
NONE_OBSERVED = "none observed"


class NoProposals(ValueError):
    pass


@dataclass(frozen=True)
class ActionRequest:
    action_id: str
    offset: int = 0


@dataclass(frozen=True)
class ParseIssue:
    kind: str  # "UnknownAction" | "NoActionsFound"
    token: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.token!r})" if self.token else self.kind


# ---------------------------------------------------------------- action names

_CAMEL = re.compile(r"(?<=[a-z])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


def action_name(action_id: str) -> str:
    """``BuildPylon`` -> ``Build Pylon``."""
    return _CAMEL.sub(" ", action_id)


def _norm(token: str) -> str:
    return re.sub(r"[^a-z0-9]", "", token.lower())


# ---------------------------------------------------------------- observations

def _clock(t: int) -> str:
    return f"{t // 60:02d}:{t % 60:02d}"


def _entity_lines(counts: dict, catalog: ActionCatalog) -> list:
    lines = [f"{e}: {counts[e]}" for e in catalog.sort_entities(e for e, n in counts.items() if n > 0)]
    return lines or ["none"]


def render_state(player: PlayerState, time: int, catalog: Optional[ActionCatalog] = None) -> str:
    """Player-only rendering (no visible_enemy block); used for demo samples."""
    return "\n".join(_blocks(player, time, catalog or load_catalog(player.race))) + "\n"


def _blocks(p: PlayerState, time: int, catalog: ActionCatalog) -> list:
    out = ["[time]", f"{_clock(time)} ({time} s)",
           "[resources]", f"minerals: {p.minerals}", f"gas: {p.gas}",
           "[supply]", f"{p.supply_used}/{p.supply_cap}",
           "[units]", *_entity_lines(p.units, catalog),
           "[buildings]", *_entity_lines(p.buildings, catalog),
           "[technologies]"]
    techs = catalog.sort_entities(p.techs)
    out += techs or ["none"]
    out.append("[ongoing_commands]")
    out += [f"{q.action_id}: {q.remaining} s remaining" for q in p.queue] or ["none"]
    return out


def render_observation(obs: Observation, catalog: Optional[ActionCatalog] = None,
                       opponent_catalog: Optional[ActionCatalog] = None) -> str:
    catalog = catalog or load_catalog(obs.own.race)
    opponent_catalog = opponent_catalog or load_catalog(obs.opponent_race)
    out = _blocks(obs.own, obs.time, catalog)
    out.append("[visible_enemy]")
    if obs.opponent_units or obs.opponent_buildings:
        out.append(f"count: {obs.visible_enemy_count}")
        out += [f"{e}: {n}" for e, n in
                ((e, obs.opponent_units.get(e, 0) or obs.opponent_buildings.get(e, 0))
                 for e in opponent_catalog.sort_entities(set(obs.opponent_units) | set(obs.opponent_buildings)))
                if n > 0]
    else:
        out.append(NONE_OBSERVED)
    return "\n".join(out) + "\n"


def split_sections(text: str) -> dict:
    sections, current = {}, None
    for line in text.splitlines():
        m = re.fullmatch(r"\[(\w+)\]", line.strip())
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None and line.strip():
            sections[current].append(line.strip())
    return sections


def parse_state(text: str) -> dict:
    """Recover the machine-consumed fields of a rendered observation or state."""
    sec = split_sections(text)

    def counts(lines):
        out = {}
        for line in lines:
            if line in ("none", NONE_OBSERVED) or line.startswith("count:"):
                continue
            name, _, n = line.partition(":")
            out[name.strip()] = int(n)
        return out

    time = int(re.search(r"\((\d+) s\)", sec["time"][0]).group(1))
    res = dict(line.split(": ") for line in sec["resources"])
    used, cap = sec["supply"][0].split("/")
    queue = []
    for line in sec.get("ongoing_commands", []):
        if line != "none":
            aid, _, rest = line.partition(":")
            queue.append((aid.strip(), int(rest.split()[0])))
    out = {
        "time": time,
        "minerals": int(res["minerals"]),
        "gas": int(res["gas"]),
        "supply_used": int(used),
        "supply_cap": int(cap),
        "units": counts(sec.get("units", [])),
        "buildings": counts(sec.get("buildings", [])),
        "techs": [t for t in sec.get("technologies", []) if t != "none"],
        "queue": queue,
    }
    if "visible_enemy" in sec:
        lines = sec["visible_enemy"]
        out["visible_enemy_count"] = next((int(l.split(":")[1]) for l in lines if l.startswith("count:")), 0)
        out["visible_enemy"] = counts(lines)
    return out


# ---------------------------------------------------------------- planner context

def render_window(window, numbered: bool = True) -> list:
    lines = []
    for i, step in enumerate(window, 1):
        aid, offset = (step.action_id, step.offset) if hasattr(step, "action_id") else step
        lines.append(f"{i}. {action_name(aid)} (+{offset} s)")
    return lines


def render_failure(rec) -> str:
    return f"t={rec.tick} {rec.action_id} {rec.reason} retry={rec.retry_count}"


def render_battle_event(ev: dict) -> str:
    def fmt(d):
        return ", ".join(f"{k} x{v}" for k, v in sorted(d.items())) or "none"
    return (f"t={ev['t']} attacker=P{ev['attacker']} attacker_losses: {fmt(ev['attacker_losses'])}; "
            f"defender_losses: {fmt(ev['defender_losses'])}; destroyed: {fmt(ev['destroyed'])}")


def render_planner_context(ctx) -> str:
    if not ctx.proposals:
        raise NoProposals("planner context has no proposals")
    out = ["=== Current observation ===", render_observation(ctx.obs).rstrip("\n"), "=== Advisor proposals ==="]
    for prop in sorted(ctx.proposals, key=lambda p: p.agent_id):
        out.append(f"--- Advisor {prop.agent_id} ---")
        out.append(f"SO: {prop.strategic_objective}")
        out.append(f"TR: {prop.tactical_rationale}")
        out.append("Actions:")
        out += render_window(prop.window)
    out.append("=== Failure records ===")
    out += [render_failure(r) for r in ctx.failure_records] or ["none"]
    out.append("=== Battle events ===")
    out += [render_battle_event(e) for e in ctx.battle_events] or ["none"]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- parsing

_NUMBERED = re.compile(r"(?:^|(?<=\s))\d+[.)](?=\s|$)")
_OFFSET = re.compile(r"\(\s*\+?(\d+)\s*s\s*\)")
_SPLIT = re.compile(r"[\n,;]")


def _lookup_tables(catalog: ActionCatalog) -> tuple:
    ids = {_norm(a.id): a.id for a in catalog}
    produced = {_norm(a.produces): a.id for a in catalog if a.produces}
    return ids, produced


def parse_action_sequence(text: str, catalog: ActionCatalog) -> tuple:
    """Extract catalog actions from free text. Never raises."""
    actions, issues = [], []
    try:
        ids, produced = _lookup_tables(catalog)
        for chunk in _SPLIT.split(text or ""):
            for segment in _NUMBERED.split(chunk):
                offset = 0
                m = _OFFSET.search(segment)
                if m:
                    offset = int(m.group(1))
                raw = _OFFSET.sub("", segment)
                raw = re.sub(r"\([^)]*\)", "", raw)
                raw = re.split(r"\s+(?:-|--|@|:)\s+", raw)[0]
                raw = raw.strip().strip("-*•").strip()
                key = _norm(raw)
                if not key:
                    continue
                aid = ids.get(key) or produced.get(key)
                if aid is None:
                    issues.append(ParseIssue("UnknownAction", raw))
                else:
                    actions.append(ActionRequest(aid, offset))
    except Exception as exc:  # parse must stay total
        issues.append(ParseIssue("UnknownAction", f"parser error: {exc}"))
    if not actions and not issues:
        issues.append(ParseIssue("NoActionsFound"))
    return actions, issues
