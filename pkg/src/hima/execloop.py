"""Feedback loop: execute plans second by second, record failed actions for
the next planning cycle, watch for threats and decide when to replan.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import FeedbackConfig
from .planner import Deterministic, FinalPlan, PlanContext, plan
from .world.engine import apply_action_inplace, observe, tick_inplace, validate_action
from .world.types import Feasibility, GameState, Observation, Rules


@dataclass(frozen=True)
class FailureRecord:
    tick: int
    action_id: str
    reason: Feasibility
    retry_count: int

    def __post_init__(self):
        if self.reason.ok:
            raise ValueError("a failure record needs a non-Ok reason")

    def to_dict(self) -> dict:
        return {"tick": self.tick, "action_id": self.action_id, "reason": str(self.reason),
                "retry_count": self.retry_count}


@dataclass
class Pending:
    action_id: str
    due: int
    retries: int = 0


def pending_from(final: FinalPlan) -> list:
    return [Pending(e.action_id, e.earliest_time) for e in final.entries]


class Decision(enum.Enum):
    None_ = "none"
    Periodic = "periodic"
    ThreatDiscard = "threat_discard"
    Exhausted = "exhausted"


def detect_threat(obs: Observation, cfg: FeedbackConfig = FeedbackConfig()) -> bool:
    return obs.visible_enemy_count >= cfg.threat_threshold


def should_replan(now: int, last_plan_time: Optional[int], threat: bool, plan_exhausted: bool,
                  cfg: FeedbackConfig = FeedbackConfig()) -> Decision:
    if threat:
        return Decision.ThreatDiscard
    if last_plan_time is None or now - last_plan_time >= cfg.replan_period:
        return Decision.Periodic
    if plan_exhausted:
        return Decision.Exhausted
    return Decision.None_


def execute_due(state: GameState, player: int, pending: list, cfg: FeedbackConfig = FeedbackConfig(),
                before_apply: Optional[Callable] = None) -> tuple:
    """Run every entry whose time has come, in plan order.

    A failed entry is retried ``retry_delay`` seconds later, at most
    ``max_retries_per_action`` times, and then dropped. Returns
    ``(executed, failures, remaining)``.
    """
    now = state.tick
    executed, failures, remaining = [], [], []
    for entry in pending:
        if entry.due > now or not state.ongoing:
            remaining.append(entry)
            continue
        feas = validate_action(state, player, entry.action_id)
        if feas.ok:
            if before_apply is not None:
                before_apply(state, player, entry.action_id)
            apply_action_inplace(state, player, entry.action_id)
            executed.append(entry.action_id)
            continue
        failures.append(FailureRecord(now, entry.action_id, feas, entry.retries))
        if entry.retries < cfg.max_retries_per_action:
            remaining.append(Pending(entry.action_id, now + cfg.retry_delay, entry.retries + 1))
    remaining.sort(key=lambda e: e.due)
    return executed, failures, remaining


def step_plan(state: GameState, player: int, pending: list, cfg: FeedbackConfig = FeedbackConfig()) -> tuple:
    """Advance the world one second, then execute due entries, so anything
    that completes this second is usable by the plan right away."""
    tick_inplace(state)
    executed, failures, remaining = execute_due(state, player, pending, cfg)
    return state, executed, failures, remaining


# ---------------------------------------------------------------- controller

@dataclass
class Counters:
    planner_calls: int = 0
    advisor_calls: int = 0
    threat_events: int = 0
    exhaustion_events: int = 0
    periodic_events: int = 0


@dataclass
class HimaController:
    """One HIMA side: advisors propose, the planner merges, this loop executes."""

    pool: object
    backend: object = field(default_factory=Deterministic)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    delta: int = 180
    mode: str = "ngt"
    agent_ids: Optional[tuple] = None
    tcot: bool = True
    rules: Rules = field(default_factory=Rules)
    pending: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # records since the last plan
    last_plan_time: Optional[int] = None
    threatened: bool = False
    counters: Counters = field(default_factory=Counters)
    log: list = field(default_factory=list)  # trace records

    def _advisors(self):
        if self.agent_ids is None:
            return self.pool.advisors
        return [a for a in self.pool.advisors if a.agent_id in self.agent_ids]

    def _replan(self, obs: Observation, decision: Decision) -> None:
        advisors = self._advisors()
        proposals = [a.propose(obs) for a in advisors]
        self.counters.advisor_calls += len(proposals)
        ctx = PlanContext(obs, proposals, list(self.failures), list(obs.battle_events))
        self.counters.planner_calls += 1
        final, trace = plan(ctx, self.backend, self.delta, self.mode, self.rules, self.pool.catalog,
                            origin=self.counters.planner_calls, tcot=self.tcot)
        self.log.append({"kind": "plan", "t": obs.time, "trigger": decision.value,
                         "failures_in_context": [f.to_dict() for f in ctx.failure_records],
                         "trace": trace.to_dict()})
        self.pending = pending_from(final)
        self.failures = []
        self.last_plan_time = obs.time

    def act(self, state: GameState, player: int, before_apply: Optional[Callable] = None) -> list:
        """Called once per second after the world has advanced."""
        obs = observe(state, player)
        threat_now = detect_threat(obs, self.feedback)
        rising = threat_now and not self.threatened
        self.threatened = threat_now
        if rising:
            self.counters.threat_events += 1
            self.log.append({"kind": "threat", "t": obs.time, "visible_enemy_count": obs.visible_enemy_count})
        decision = should_replan(obs.time, self.last_plan_time, rising, not self.pending, self.feedback)
        if decision is Decision.Exhausted:
            self.counters.exhaustion_events += 1
        elif decision is Decision.Periodic:
            self.counters.periodic_events += 1
        if decision is not Decision.None_:
            self._replan(obs, decision)
        executed, failures, self.pending = execute_due(state, player, self.pending, self.feedback, before_apply)
        for aid in executed:
            self.log.append({"kind": "exec", "t": state.tick, "action_id": aid})
        for rec in failures:
            self.log.append({"kind": "fail", "t": rec.tick, **rec.to_dict()})
        self.failures += failures
        return executed
