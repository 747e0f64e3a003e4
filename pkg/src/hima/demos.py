"""Demonstration pipeline: replay logs, sliding-window samples, rationales and
the instruction dataset file.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from . import protocol
from .config import AgentConfig, DemoConfig
from .textio import action_name, render_state, render_window
from .world.catalog import load_catalog
from .world.types import Category, PlayerState, Race

REPLAY_FORMAT = "hima-replay"
REPLAY_VERSION = 1

HEADERS = ("Immediate strategy:", "Short-term strategy:", "Long-term strategy:")

INSTRUCTION = (
    "You command the {race} side of a real-time strategy match and decide only macro actions: "
    "economy, production, expansion and research. Your strategic objective: {strategic_objective}\n"
    "Given the current state, explain your plan for the immediate, short-term and long-term "
    "timeframes, then list the actions you will issue over the next {window} seconds as a numbered "
    "list in the form 'N. Action Name (+offset s)'."
)

RATIONALE_SYSTEM = (
    "You annotate expert replays. Given a game state and the actions the expert issued next, "
    "explain why those actions make sense. Organize the answer under three headings: "
    "'Immediate strategy:', 'Short-term strategy:' and 'Long-term strategy:'."
)


class EmptyReplay(ValueError):
    pass


class ExternalUnavailable(RuntimeError):
    pass


class IoError(OSError):
    pass


@dataclass
class ReplayLog:
    meta: dict
    events: list = field(default_factory=list)  # dicts {t, player, action_id}
    snapshots: dict = field(default_factory=dict)  # (player, t) -> PlayerState dict

    @property
    def replay_id(self) -> str:
        return str(self.meta.get("id", f"seed{self.meta.get('seed', 0)}"))

    def record(self, t: int, player: int, action_id: str, state: PlayerState) -> None:
        """Append an event; the snapshot is the acting player's state before the
        first action at ``t``."""
        if self.events and t < self.events[-1]["t"]:
            raise ValueError(f"event at t={t} precedes the last recorded event")
        key = (player, t)
        if key not in self.snapshots:
            self.snapshots[key] = state.to_dict()
        self.events.append({"t": t, "player": player, "action_id": action_id})

    def player_events(self, player: int) -> list:
        return [e for e in self.events if e["player"] == player]

    def final_units(self, player: int) -> dict:
        return dict(self.meta.get("final_units", [{}, {}])[player])

    def save(self, path) -> None:
        lines = [json.dumps({"format": REPLAY_FORMAT, "version": REPLAY_VERSION, "meta": self.meta})]
        for (player, t), state in sorted(self.snapshots.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            lines.append(json.dumps({"kind": "snapshot", "t": t, "player": player, "state": state}))
        for e in self.events:
            lines.append(json.dumps({"kind": "event", **e}))
        try:
            Path(path).write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise IoError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ReplayLog":
        text = Path(path).read_text()
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("format") != REPLAY_FORMAT:
            raise ValueError(f"{path}: not a replay file")
        if rows[0].get("version") != REPLAY_VERSION:
            raise ValueError(f"{path}: unsupported replay version {rows[0].get('version')}")
        log = cls(meta=rows[0]["meta"])
        for row in rows[1:]:
            if row["kind"] == "snapshot":
                log.snapshots[(row["player"], row["t"])] = row["state"]
            else:
                log.events.append({"t": row["t"], "player": row["player"], "action_id": row["action_id"]})
        return log


@dataclass(frozen=True)
class WindowStep:
    action_id: str
    offset: int


@dataclass(frozen=True)
class DemoSample:
    state_text: str
    window: tuple  # of WindowStep
    rationale: str = ""
    source: tuple = ("", 0)
    race: str = "protoss"
    cluster_id: Optional[int] = None
    flags: tuple = ()

    def __post_init__(self):
        if not self.window:
            raise ValueError("a sample needs at least one action")
        if self.window[0].offset != 0:
            raise ValueError("the first action of a window is at offset 0")


def extract_samples(log: ReplayLog, cfg: DemoConfig = DemoConfig(), player: int = 0) -> list:
    """One sample per distinct action time of ``player``; each window holds
    that player's actions in the half-open interval [t, t + window)."""
    delta = cfg.window_seconds
    if delta < 1:
        raise ValueError("window_seconds must be >= 1")
    events = log.player_events(player)
    if not events:
        raise EmptyReplay(f"replay {log.replay_id} has no actions for player {player}")
    race = Race.parse(log.meta["races"][player])
    catalog = load_catalog(race)
    times = sorted({e["t"] for e in events})
    samples = []
    lo = 0
    for t in times:
        while events[lo]["t"] < t:
            lo += 1
        window = []
        for e in events[lo:]:
            if e["t"] >= t + delta:
                break
            window.append(WindowStep(e["action_id"], e["t"] - t))
        snap = log.snapshots.get((player, t))
        if snap is None:
            raise ValueError(f"replay {log.replay_id} lacks a snapshot for player {player} at t={t}")
        state_text = render_state(PlayerState.from_dict(snap), t, catalog)
        samples.append(DemoSample(state_text, tuple(window), source=(log.replay_id, t), race=race.value))
    return samples


# ---------------------------------------------------------------- rationales

def _phrase(action_id: str, catalog) -> str:
    spec = catalog.by_id.get(action_id)
    if spec is None:
        return "issue " + action_name(action_id)
    if spec.is_command:
        return "attack with the army" if action_id == "Attack" else "scout the opponent"
    if spec.supply_granted and "townhall" not in spec.tags:
        return "add supply"
    if "worker" in spec.tags:
        return "grow the economy"
    if "townhall" in spec.tags:
        return "expand to a new base"
    if "gas" in spec.tags:
        return "open a gas income"
    if spec.category is Category.UnitProduction:
        return "strengthen the army"
    if spec.category is Category.TechnologyDevelopment:
        return "research upgrades"
    return "build infrastructure"


def template_rationale(window: Iterable, race: "Race | str", delta: int) -> str:
    catalog = load_catalog(Race.parse(race))
    bounds = (delta / 3, 2 * delta / 3, float("inf"))
    frames = [[], [], []]
    for step in window:
        idx = next(i for i, b in enumerate(bounds) if step.offset < b)
        frames[idx].append(step)
    lines = []
    for header, steps in zip(HEADERS, frames):
        if not steps:
            lines.append(f"{header} hold; keep gathering resources for the next step.")
            continue
        goals = []
        for step in steps:
            goal = _phrase(step.action_id, catalog)
            if goal not in goals:
                goals.append(goal)
        names = ", ".join(f"{action_name(s.action_id)} at +{s.offset} s" for s in steps)
        lines.append(f"{header} {'; '.join(goals)} ({names}).")
    return "\n".join(lines)


def attach_rationale(sample: DemoSample, cfg: DemoConfig = DemoConfig(), agent: AgentConfig = AgentConfig(),
                     endpoint: "protocol.Endpoint | None" = None) -> DemoSample:
    if not sample.window:
        raise ValueError("cannot explain an empty window")
    if cfg.rationale_mode == "template":
        text = template_rationale(sample.window, sample.race, cfg.window_seconds)
        return dataclasses.replace(sample, rationale=text)
    if cfg.rationale_mode != "external":
        raise ValueError(f"unknown rationale mode {cfg.rationale_mode!r}")
    body = sample.state_text + "\nActions taken:\n" + "\n".join(render_window(sample.window))
    request = protocol.make_request(RATIONALE_SYSTEM, body, agent.temperature, agent.max_actions)
    try:
        text = protocol.exchange(endpoint if endpoint is not None else agent.endpoint, request, agent.timeout)
    except (protocol.Timeout, protocol.MalformedReply):
        return dataclasses.replace(sample, rationale="", flags=sample.flags + ("ExternalUnavailable",))
    if not all(h in text for h in HEADERS):
        # keep the three-timeframe shape even when the writer ignored it
        text = text.strip() + "\n" + template_rationale(sample.window, sample.race, cfg.window_seconds)
    return dataclasses.replace(sample, rationale=text)


# ---------------------------------------------------------------- dataset

def make_record(sample: DemoSample, window_seconds: int = 180) -> dict:
    instruction = INSTRUCTION.format(race=sample.race.capitalize(), strategic_objective="{strategic_objective}",
                                     window=window_seconds)
    output = sample.rationale + "\n" + "\n".join(render_window(sample.window))
    return {"instruction": instruction, "input": sample.state_text, "output": output}


def emit_dataset(samples: Iterable, path, format: str = "jsonl", window_seconds: int = 180) -> int:
    """Write one JSON record per line; flagged or rationale-less samples are skipped."""
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    records = [make_record(s, window_seconds) for s in samples if s.rationale and not s.flags]
    try:
        with open(path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return len(records)


def read_dataset(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
