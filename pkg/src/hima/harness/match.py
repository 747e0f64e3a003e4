"""Running single matches and seeded tournaments."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

from .. import protocol
from ..config import AgentConfig, FeedbackConfig
from ..demos import INSTRUCTION, ReplayLog
from ..execloop import HimaController
from ..opponents import make_builtin, make_expert
from ..planner import Deterministic
from ..textio import parse_action_sequence, render_observation
from ..world.engine import apply_action_inplace, new_game, observe, tick_inplace, validate_action
from ..world.types import Race, Rules


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- sides

@dataclass
class Hima:
    pool: object
    backend: object = field(default_factory=Deterministic)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    delta: int = 180
    mode: str = "ngt"
    agent_ids: Optional[tuple] = None
    tcot: bool = True

    def describe(self) -> dict:
        return {"kind": "hima", "k": len(self.agent_ids) if self.agent_ids else self.pool.k, "mode": self.mode,
                "delta": self.delta, "tcot": self.tcot, "backend": type(self.backend).__name__,
                "tau": self.feedback.threat_threshold, "replan_period": self.feedback.replan_period}


@dataclass
class Builtin:
    level: int
    style: Optional[str] = None

    def describe(self) -> dict:
        return {"kind": "builtin", "level": self.level, "style": self.style}


@dataclass
class Expert:
    style: str

    def describe(self) -> dict:
        return {"kind": "expert", "style": self.style}


@dataclass
class External:
    """A side driven entirely by an external agent, queried every ``period`` seconds."""
    endpoint: object = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    period: int = 180

    def describe(self) -> dict:
        return {"kind": "external", "endpoint": self.endpoint if isinstance(self.endpoint, str) else "callable",
                "period": self.period}


Side = Union[Hima, Builtin, Expert, External]


@dataclass
class MatchConfig:
    sides: tuple
    races: tuple = ("protoss", "zerg")
    seed: int = 0
    time_cap: int = 3600
    record_replay: bool = False
    trace_path: Optional[str] = None
    replay_path: Optional[str] = None

    def validate(self) -> None:
        if len(self.sides) != 2 or any(s is None for s in self.sides):
            raise ConfigError("a match needs two configured sides")
        if len(self.races) != 2:
            raise ConfigError("a match needs two races")
        try:
            [Race.parse(r) for r in self.races]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.time_cap < 1:
            raise ConfigError("time_cap must be >= 1")
        for s in self.sides:
            if not isinstance(s, (Hima, Builtin, Expert, External)):
                raise ConfigError(f"unsupported side {s!r}")
            if isinstance(s, Builtin) and not 1 <= s.level <= 10:
                raise ConfigError(f"builtin level {s.level} outside 1..10")

    def with_seed(self, seed: int) -> "MatchConfig":
        return dataclasses.replace(self, seed=seed)


@dataclass
class MatchResult:
    winner: Optional[int]  # None for a draw
    duration: int
    seed: int
    trace_hash: str
    trace: dict
    trace_path: Optional[str] = None
    replay_path: Optional[str] = None
    replay: Optional[ReplayLog] = None
    planner_calls: tuple = (0, 0)
    advisor_calls: tuple = (0, 0)
    threat_events: tuple = (0, 0)
    exhaustion_events: tuple = (0, 0)

    @property
    def series(self) -> list:
        return self.trace["series"]


# ---------------------------------------------------------------- controllers

class _ScriptedController:
    def __init__(self, policy, cheat_vision: bool):
        self.policy = policy
        self.cheat_vision = cheat_vision
        self.log = []

    def act(self, state, player, before_apply) -> list:
        if not self.policy.due(state.tick):
            return []
        done = []
        for req in self.policy.decide(observe(state, player, self.cheat_vision, recent_events=0)):
            if validate_action(state, player, req.action_id).ok:
                before_apply(state, player, req.action_id)
                apply_action_inplace(state, player, req.action_id)
                done.append(req.action_id)
        for aid in done:
            self.log.append({"kind": "exec", "t": state.tick, "action_id": aid})
        return done


class _ExternalController:
    def __init__(self, side: External, race: Race, catalog):
        self.side = side
        self.race = race
        self.catalog = catalog
        self.pending = []
        self.last = None
        self.calls = 0
        self.log = []

    def act(self, state, player, before_apply) -> list:
        now = state.tick
        if self.last is None or now - self.last >= self.side.period:
            self.last = now
            self.calls += 1
            obs = observe(state, player)
            system = INSTRUCTION.format(race=self.race.value.capitalize(), strategic_objective="win the match",
                                        window=self.side.period)
            request = protocol.make_request(system, render_observation(obs, self.catalog),
                                            self.side.agent.temperature, self.side.agent.max_actions)
            try:
                text = protocol.exchange(self.side.endpoint if self.side.endpoint is not None
                                         else self.side.agent.endpoint, request, self.side.agent.timeout)
                actions, _ = parse_action_sequence(text, self.catalog)
            except (protocol.Timeout, protocol.MalformedReply) as exc:
                self.log.append({"kind": "external_error", "t": now, "error": type(exc).__name__})
                actions = []
            self.pending = [(now + a.offset, a.action_id) for a in actions[: self.side.agent.max_actions]]
        done, keep = [], []
        for due, aid in self.pending:
            if due <= now and validate_action(state, player, aid).ok:
                before_apply(state, player, aid)
                apply_action_inplace(state, player, aid)
                done.append(aid)
            elif due > now:
                keep.append((due, aid))
        self.pending = keep
        for aid in done:
            self.log.append({"kind": "exec", "t": now, "action_id": aid})
        return done


def _controller(side, race: Race, seed: int, player: int, rules: Rules, catalog):
    if isinstance(side, Builtin):
        pol = make_builtin(race, side.level, 2 * seed + player, side.style)
        return _ScriptedController(pol, pol.difficulty.cheat_vision), pol.difficulty.cheat_money
    if isinstance(side, Expert):
        return _ScriptedController(make_expert(race, side.style, 2 * seed + player), False), False
    if isinstance(side, External):
        return _ExternalController(side, race, catalog), False
    if side.pool.catalog.race is not race:
        raise ConfigError(f"advisor pool is {side.pool.catalog.race.value} but the side plays {race.value}")
    return HimaController(side.pool, side.backend, side.feedback, side.delta, side.mode, side.agent_ids,
                          side.tcot, rules), False


# ---------------------------------------------------------------- match loop

def _hash(trace: dict) -> str:
    return hashlib.sha256(json.dumps(trace, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def run_match(cfg: MatchConfig) -> MatchResult:
    """Play one seeded match to the end (elimination or time cap)."""
    cfg.validate()
    races = tuple(Race.parse(r) for r in cfg.races)
    rules = dataclasses.replace(Rules(), time_cap=cfg.time_cap)
    state = new_game(races, cfg.seed, rules)
    made = [_controller(s, r, cfg.seed, i, rules, state.catalogs[i]) for i, (s, r) in enumerate(zip(cfg.sides, races))]
    if any(m for _, m in made):
        state = new_game(races, cfg.seed, rules, cheat_money=[m for _, m in made])
    ctrls = [c for c, _ in made]
    replay = ReplayLog(meta={"id": f"seed{cfg.seed}", "seed": cfg.seed, "races": [r.value for r in races]}) \
        if cfg.record_replay else None

    def before_apply(st, player, aid):
        if replay is not None:
            replay.record(st.tick, player, aid, st.players[player])

    series = [{"supply_used": [], "supply_cap": [], "spent_minerals": [], "spent_gas": [], "techs": []}
              for _ in range(2)]

    def sample():
        for i, p in enumerate(state.players):
            s = series[i]
            s["supply_used"].append(p.supply_used)
            s["supply_cap"].append(p.supply_cap)
            s["spent_minerals"].append(p.spent_minerals)
            s["spent_gas"].append(p.spent_gas)
            s["techs"].append(len(p.techs))

    for i, c in enumerate(ctrls):
        c.act(state, i, before_apply)
    while state.ongoing:
        tick_inplace(state)
        sample()
        if not state.ongoing:
            break
        for i, c in enumerate(ctrls):
            c.act(state, i, before_apply)

    def counter(name):
        return tuple(getattr(c.counters, name) if isinstance(c, HimaController) else 0 for c in ctrls)

    planner_calls = counter("planner_calls")
    trace = {
        "format": "hima-trace", "version": 1, "seed": cfg.seed, "races": [r.value for r in races],
        "time_cap": cfg.time_cap, "sides": [s.describe() for s in cfg.sides],
        "replan_period": [s.feedback.replan_period if isinstance(s, Hima) else None for s in cfg.sides],
        "events": [sorted(c.log, key=lambda e: e["t"]) for c in ctrls],
        "battles": state.battle_log,
        "series": series,
        "tech_total": [len(c.tech_ids) for c in state.catalogs],
        "planner_calls": list(planner_calls),
        "advisor_calls": list(counter("advisor_calls")),
        "threat_events": list(counter("threat_events")),
        "exhaustion_events": list(counter("exhaustion_events")),
        "external_calls": [c.calls if isinstance(c, _ExternalController) else 0 for c in ctrls],
        "winner": state.winner, "outcome": state.outcome.value, "duration": state.tick,
    }
    digest = _hash(trace)
    if cfg.trace_path:
        Path(cfg.trace_path).write_text(json.dumps(trace) + "\n")
    if replay is not None:
        replay.meta.update(winner=state.winner, duration=state.tick,
                           final_units=[{u: n for u, n in p.units.items() if n > 0} for p in state.players])
        if cfg.replay_path:
            replay.save(cfg.replay_path)
    return MatchResult(state.winner, state.tick, cfg.seed, digest, trace, cfg.trace_path, cfg.replay_path, replay,
                       planner_calls, tuple(trace["advisor_calls"]), tuple(trace["threat_events"]),
                       tuple(trace["exhaustion_events"]))


# ---------------------------------------------------------------- tournaments

@dataclass
class WinRate:
    fraction: float
    results: list  # (seed, winner) in seed order
    planner_calls: list = field(default_factory=list)

    @property
    def wins(self) -> int:
        return sum(1 for _, w in self.results if w == 0)


def _play(args) -> tuple:
    template, seed = args
    cfg = template(seed) if callable(template) else template.with_seed(seed)
    res = run_match(cfg)
    return seed, res.winner, res.planner_calls[0]


def win_rate(template: "MatchConfig | Callable", n: int, seed_base: int = 0, workers: int = 1) -> WinRate:
    """Side 0's wins over seeds ``seed_base .. seed_base + n - 1``; draws count as non-wins."""
    if n < 1:
        raise ValueError("n must be >= 1")
    jobs = [(template, s) for s in range(seed_base, seed_base + n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_play, jobs))
    else:
        rows = [_play(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    wins = sum(1 for _, w, _ in rows if w == 0)
    return WinRate(wins / n, [(s, w) for s, w, _ in rows], [c for _, _, c in rows])
