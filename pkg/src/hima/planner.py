"""Strategic planner: turns the advisors' proposals into one executable plan.

Planning runs four stages. Assessment projects the resources available over
the horizon. Group resolution finds agreed actions, resolves conflicts and
adopts isolated ones. Formulation fixes the synthesis order. The temporal
breakdown splits that order into immediate, short-term and long-term
buckets by simulating the economy forward.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import protocol
from .clustering import StrategicLabel
from .config import AgentConfig, PlannerWeights
from .textio import NoProposals, parse_action_sequence, render_planner_context
from .world.catalog import ActionCatalog, load_catalog
from .world.engine import check, economy_second, enqueue, income_workers
from .world.types import FeasibilityKind, Observation, PlayerState, Rules

MODES = ("ngt", "ngt_plain", "simple", "direct")

PLANNER_SYSTEM = (
    "You are the strategic planner of a real-time strategy team. Several advisors, each with its own "
    "strategic objective, proposed action sequences with rationales. Identify where they agree, resolve "
    "their conflicts by weighing each rationale against its objective, keep isolated ideas that are "
    "feasible, and account for the failure records and battle events. Answer with one merged action "
    "sequence as a numbered list in the form 'N. Action Name (+offset s)', ordered by urgency: immediate "
    "actions first, then short-term, then long-term."
)


@dataclass
class PlanContext:
    obs: Observation
    proposals: list
    failure_records: list = field(default_factory=list)
    battle_events: list = field(default_factory=list)
    game_time: Optional[int] = None

    def __post_init__(self):
        if self.game_time is None:
            self.game_time = self.obs.time


@dataclass(frozen=True)
class Candidate:
    """One proposed action instance: who proposed it and where."""
    action_id: str
    agent_id: int
    offset: int
    position: int


@dataclass
class Conflict:
    kind: str  # "resources" | "duplicate"
    actions: list
    winners: list
    losers: list
    scores: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "actions": self.actions, "winners": self.winners, "losers": self.losers,
                "scores": {k: round(v, 6) for k, v in self.scores.items()}}


@dataclass
class ResolvedStrategy:
    agreed: list  # of (action_id, supporting agent ids)
    conflict_resolutions: list
    adopted_isolated: list
    synthesis_order: list  # of action ids
    budget: tuple = (0, 0)

    def to_dict(self) -> dict:
        return {
            "agreed": [[a, list(src)] for a, src in self.agreed],
            "conflicts": [c.to_dict() for c in self.conflict_resolutions],
            "adopted_isolated": list(self.adopted_isolated),
            "synthesis_order": list(self.synthesis_order),
            "budget": list(self.budget),
        }


@dataclass
class TemporalPlan:
    immediate: list  # action ids
    short_term: list  # (action id, projected time)
    long_term: list  # action ids

    def to_dict(self) -> dict:
        return {"immediate": list(self.immediate), "short_term": [list(x) for x in self.short_term],
                "long_term": list(self.long_term)}


@dataclass(frozen=True)
class PlanEntry:
    action_id: str
    earliest_time: int


@dataclass
class FinalPlan:
    entries: list  # of PlanEntry, earliest_time nondecreasing
    origin: int
    horizon: int
    created: int = 0

    @property
    def action_ids(self) -> list:
        return [e.action_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class PlannerTrace:
    invocation: int
    time: int
    mode: str
    backend: str
    proposals: list
    resolved: Optional[dict] = None
    temporal: Optional[dict] = None
    final: list = field(default_factory=list)
    fallback: Optional[str] = None
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"invocation": self.invocation, "time": self.time, "mode": self.mode, "backend": self.backend,
                "proposals": self.proposals, "resolved": self.resolved, "temporal": self.temporal,
                "final": self.final, "fallback": self.fallback, "flags": self.flags}


# ---------------------------------------------------------------- assessment

def projected_budget(p: PlayerState, catalog: ActionCatalog, rules: Rules, delta: int) -> tuple:
    """Bank plus the current income rate carried over ``delta`` seconds."""
    mineral_w, gas_w = income_workers(p, catalog, rules)
    minerals = p.minerals + mineral_w * rules.mineral_rate_centi * p.income_pct * delta // 10000
    gas = p.gas + gas_w * rules.gas_rate_centi * p.income_pct * delta // 10000
    return minerals, gas


def _owned_or_queued(p: PlayerState, spec) -> bool:
    target = spec.produces
    return bool(target) and (p.has(target) or any(q.action_id == spec.id for q in p.queue))


def so_aligned(spec, label: Optional[StrategicLabel]) -> bool:
    if label is None or spec.domain not in ("ground", "air"):
        return False
    if label is StrategicLabel.AirFocus:
        return spec.domain == "air"
    if label is StrategicLabel.GroundSupportFocus:
        return spec.domain == "ground"
    return True


def _candidates(proposals) -> list:
    out = []
    for prop in sorted(proposals, key=lambda p: p.agent_id):
        for pos, step in enumerate(prop.window):
            out.append(Candidate(step.action_id, prop.agent_id, step.offset, pos))
    return out


# ---------------------------------------------------------------- group resolution

def ngt_resolve(proposals: Sequence, ctx: PlanContext, delta: int = 180,
                weights: PlannerWeights = PlannerWeights(), use_rationale: bool = True,
                catalog: Optional[ActionCatalog] = None, rules: Rules = Rules()) -> ResolvedStrategy:
    if not proposals:
        raise NoProposals("nothing to resolve")
    own = ctx.obs.own
    catalog = catalog or load_catalog(own.race)
    labels = {p.agent_id: p.label for p in proposals}
    cands = _candidates(proposals)
    supporters = {}
    for c in cands:
        supporters.setdefault(c.action_id, set()).add(c.agent_id)

    # (i) agreement: the number of instances at least two advisors asked for
    per_agent = {}
    for c in cands:
        per_agent.setdefault(c.action_id, {}).setdefault(c.agent_id, []).append(c)
    agreed, rest = [], []
    for aid, by_agent in per_agent.items():
        lists = sorted(by_agent.values(), key=lambda lst: (-len(lst), lst[0].agent_id))
        shared = len(lists[1]) if len(lists) > 1 else 0
        for i in range(shared):
            first = min((lst[i] for lst in lists if len(lst) > i), key=lambda c: (c.offset, c.agent_id))
            src = tuple(sorted(lst[i].agent_id for lst in lists if len(lst) > i))
            agreed.append((first, src))
        rest += lists[0][shared:]
        for lst in lists[1:]:
            rest += lst[shared:]
    agreed.sort(key=lambda x: (x[0].offset, x[0].agent_id, x[0].position))
    rest.sort(key=lambda c: (c.agent_id, c.position))

    conflicts = []
    minerals, gas = projected_budget(own, catalog, rules, delta)
    budget = (minerals, gas)

    def score(c: Candidate) -> float:
        spec = catalog.by_id[c.action_id]
        feasible_now = 1.0 if check(own, catalog, c.action_id).ok else 0.0
        s = weights.feasible_now * feasible_now + weights.majority * len(supporters[c.action_id])
        if use_rationale and so_aligned(spec, labels.get(c.agent_id)):
            s += weights.so_alignment
        return s

    # agreed instances pass through as they are; a contested unique action is
    # dropped when agreed on already, owned or queued, and kept once otherwise
    kept_agreed = list(agreed)
    seen_unique = {c.action_id for c, _ in agreed if "unique" in catalog.by_id[c.action_id].tags}
    dup_groups = {}
    filtered = []
    for c in rest:
        spec = catalog.by_id[c.action_id]
        if "unique" in spec.tags:
            if c.action_id in seen_unique or _owned_or_queued(own, spec):
                conflicts.append(Conflict("duplicate", [c.action_id], [], [c.action_id], {}))
                continue
            dup_groups.setdefault(c.action_id, []).append(c)
        filtered.append(c)
    for aid, group in dup_groups.items():
        if len(group) < 2:
            continue
        scores = {f"{c.action_id}@{c.agent_id}": score(c) for c in group}
        winner = max(group, key=lambda c: (score(c), -c.agent_id))
        losers = [c for c in group if c is not winner]
        conflicts.append(Conflict("duplicate", [aid] * len(group), [f"{aid}@{winner.agent_id}"],
                                  [f"{aid}@{c.agent_id}" for c in losers], scores))
        filtered = [c for c in filtered if not any(c is x for x in losers)]

    for c, _ in kept_agreed:
        spec = catalog.by_id[c.action_id]
        minerals -= spec.mineral_cost
        gas -= spec.gas_cost

    # (ii) resource conflict: the non-agreed actions of several advisors overrun the projected budget
    winners, isolated = [], []
    need_m = sum(catalog.by_id[c.action_id].mineral_cost for c in filtered)
    need_g = sum(catalog.by_id[c.action_id].gas_cost for c in filtered)
    agents = {c.agent_id for c in filtered}
    if len(agents) > 1 and (need_m > max(minerals, 0) or need_g > max(gas, 0)):
        ranked = sorted(filtered, key=lambda c: (-score(c), c.agent_id, c.position))
        scores = {f"{c.action_id}@{c.agent_id}#{c.position}": score(c) for c in filtered}
        accepted, losers = [], []
        m, g = minerals, gas
        for c in ranked:
            spec = catalog.by_id[c.action_id]
            if spec.mineral_cost <= m and spec.gas_cost <= g:
                accepted.append(c)
                m -= spec.mineral_cost
                g -= spec.gas_cost
            else:
                losers.append(c)
        accepted.sort(key=lambda c: (c.offset, c.agent_id, c.position))
        winners = accepted
        conflicts.append(Conflict("resources", [c.action_id for c in filtered],
                                  [c.action_id for c in accepted], [c.action_id for c in losers], scores))
    else:
        # (iii) isolated views: adopted when affordable within the horizon
        for c in filtered:
            spec = catalog.by_id[c.action_id]
            if spec.mineral_cost <= budget[0] and spec.gas_cost <= budget[1]:
                isolated.append(c)
            else:
                conflicts.append(Conflict("unaffordable", [c.action_id], [], [c.action_id], {}))

    # (iv) synthesis
    order = [c.action_id for c, _ in kept_agreed] + [c.action_id for c in winners] + \
            [c.action_id for c in isolated]
    return ResolvedStrategy([(c.action_id, src) for c, src in kept_agreed], conflicts,
                            [c.action_id for c in isolated], order, budget)


def simple_merge(proposals: Sequence, ctx: PlanContext, delta: int = 180,
                 catalog: Optional[ActionCatalog] = None, rules: Rules = Rules()) -> ResolvedStrategy:
    """Concatenate the windows without coordination, keeping only actions
    individually affordable within the horizon."""
    if not proposals:
        raise NoProposals("nothing to merge")
    own = ctx.obs.own
    catalog = catalog or load_catalog(own.race)
    budget = projected_budget(own, catalog, rules, delta)
    order = []
    for c in sorted(_candidates(proposals), key=lambda c: (c.offset, c.agent_id, c.position)):
        spec = catalog.by_id[c.action_id]
        if spec.mineral_cost <= budget[0] and spec.gas_cost <= budget[1]:
            order.append(c.action_id)
    return ResolvedStrategy([], [], list(order), order, budget)


# ---------------------------------------------------------------- temporal breakdown

def _slot_free(state: PlayerState, catalog: ActionCatalog, spec) -> bool:
    """A producer accepts one waiting order beyond what it is working on."""
    producer = spec.producer
    if producer is None:
        return True
    cap = catalog.producer_capacity(state.buildings).get(producer, 0)
    waiting = sum(1 for q in state.queue if catalog.by_id[q.action_id].producer == producer)
    return cap > 0 and waiting < cap + 1


def _ready(state: PlayerState, catalog: ActionCatalog, spec) -> bool:
    return check(state, catalog, spec.id).ok and _slot_free(state, catalog, spec)


def _reachable(state: PlayerState, catalog: ActionCatalog, spec, rules: Rules) -> bool:
    """Whether waiting alone can make ``spec`` ready: whatever it lacks is
    already queued or flowing in."""
    feas = check(state, catalog, spec.id)
    queued = {catalog.by_id[q.action_id].produces for q in state.queue}
    if feas.kind is FeasibilityKind.MissingPrerequisite:
        return all(m in queued for m in feas.missing)
    if feas.kind is FeasibilityKind.InsufficientResources:
        mineral_w, gas_w = income_workers(state, catalog, rules)
        if state.minerals < spec.mineral_cost and not mineral_w:
            return False
        if state.gas < spec.gas_cost and not gas_w and not queued.intersection(catalog.gas_buildings):
            return False
    if feas.kind is FeasibilityKind.SupplyBlocked:
        if state.supply_cap >= rules.supply_max or not queued.intersection(catalog.supply_providers):
            return False
    if spec.producer is not None and not state.buildings.get(spec.producer, 0) and spec.producer not in queued:
        return False
    return True


def _walk(order: Sequence[str], obs: Observation, delta: int, catalog: ActionCatalog, rules: Rules,
          extra_passes: bool = True, hold: frozenset = frozenset()) -> tuple:
    now = obs.time
    end = now + delta
    state = obs.own.copy()
    cursor = now
    immediate, short = [], []

    def place(aid: str) -> bool:
        nonlocal state, cursor
        spec = catalog.get(aid)
        if spec is None:
            return False
        if "unique" in spec.tags and _owned_or_queued(state, spec):
            # nothing to gain from a second copy; left for the next cycle to reconsider
            return False
        if _ready(state, catalog, spec):
            if not spec.is_command:
                enqueue(state, spec)
            if cursor > now:
                short.append((aid, cursor))
            elif aid in hold:
                # failed since the last plan: give it a second instead of repeating it blindly
                short.append((aid, now + 1))
            else:
                immediate.append(aid)
            return True
        if cursor >= end or not _reachable(state, catalog, spec, rules):
            return False
        probe = state.copy()
        t = cursor
        while t < end:
            economy_second(probe, catalog, rules)
            t += 1
            if _ready(probe, catalog, spec):
                if not spec.is_command:
                    enqueue(probe, spec)
                state, cursor = probe, t
                short.append((aid, t))
                return True
            if not _reachable(probe, catalog, spec, rules):
                return False
        return False

    deferred = [i for i, aid in enumerate(order) if not place(aid)]
    progress = extra_passes
    while deferred and progress:
        before = len(deferred)
        deferred = [i for i in deferred if not place(order[i])]
        progress = len(deferred) < before
    return immediate, short, deferred


def _unlock_move(order: list, deferred: list, obs: Observation, catalog: ActionCatalog) -> bool:
    """Move the first deferred action whose missing prerequisites are all
    built by earlier-scheduled entries to just after the last of them."""
    own = obs.own
    queued = {catalog.by_id[q.action_id].produces for q in own.queue}
    blocked = set(deferred)
    for idx in deferred:
        spec = catalog.get(order[idx])
        if spec is None:
            continue
        missing = [m for m in spec.prerequisites if not own.has(m) and m not in queued]
        if not missing:
            continue
        last = -1
        for m in missing:
            j = next((j for j, a in enumerate(order) if j not in blocked and catalog.by_id[a].produces == m
                      if a in catalog.by_id), None)
            if j is None:
                last = -1
                break
            last = max(last, j)
        if last > idx:
            order.insert(last, order.pop(idx))
            return True
    return False


def tcot_decompose(order: Sequence[str], obs: Observation, delta: int = 180,
                   catalog: Optional[ActionCatalog] = None, rules: Rules = Rules(), hold=()) -> TemporalPlan:
    """Walk ``order`` against a projected copy of the player's state.

    An action valid right away (after the earlier immediates are paid) is
    immediate, provided its producer can take the order; a production
    building holds at most one waiting order, so money is not sunk into long
    queues. Otherwise the economy is simulated forward from the time of the
    last scheduled entry; the first second at which the action becomes valid,
    if within the horizon, makes it short-term. Actions that could not be
    placed get further passes after the rest of the order. An action stuck
    behind a prerequisite that a later entry builds is moved right after that
    entry and the walk is redone. What remains is long-term. Actions in
    ``hold`` (those that just failed) are never immediate.
    """
    catalog = catalog or load_catalog(obs.own.race)
    hold = frozenset(hold)
    work = list(order)
    for _ in range(len(work)):
        _, _, deferred = _walk(work, obs, delta, catalog, rules, extra_passes=False, hold=hold)
        if not deferred or not _unlock_move(work, deferred, obs, catalog):
            break
    immediate, short, deferred = _walk(work, obs, delta, catalog, rules, hold=hold)
    short.sort(key=lambda x: x[1])
    return TemporalPlan(immediate, short, [work[i] for i in deferred])


def emit(temporal: TemporalPlan, now: int, delta: int, origin: int) -> FinalPlan:
    entries = [PlanEntry(a, now) for a in temporal.immediate]
    entries += [PlanEntry(a, t) for a, t in temporal.short_term]
    entries += [PlanEntry(a, now + delta) for a in temporal.long_term]
    return FinalPlan(entries, origin, delta, now)


def direct_plan(proposal, now: int, delta: int, origin: int) -> FinalPlan:
    """A single advisor's window executed as proposed, without planning."""
    entries = [PlanEntry(s.action_id, now + s.offset) for s in proposal.window if s.offset < delta]
    return FinalPlan(entries, origin, delta, now)


# ---------------------------------------------------------------- orchestration

@dataclass
class Deterministic:
    weights: PlannerWeights = PlannerWeights()


@dataclass
class External:
    endpoint: object = None
    agent: AgentConfig = AgentConfig()


_invocations = itertools.count(1)


def _summarize(proposals) -> list:
    return [{"agent": p.agent_id, "actions": [[s.action_id, s.offset] for s in p.window],
             "flags": list(p.flags)} for p in proposals]


def flat_schedule(order: Sequence[str], now: int = 0, hold=()) -> TemporalPlan:
    """No temporal decomposition: everything is due now, in order, except
    that actions which just failed wait one second."""
    return TemporalPlan([a for a in order if a not in hold], [(a, now + 1) for a in order if a in hold], [])


def _failed_ids(ctx: PlanContext) -> frozenset:
    return frozenset(f.action_id for f in ctx.failure_records)


def _deterministic(ctx: PlanContext, delta: int, weights: PlannerWeights, mode: str, catalog, rules,
                   tcot: bool = True) -> tuple:
    if mode == "simple":
        resolved = simple_merge(ctx.proposals, ctx, delta, catalog, rules)
    else:
        resolved = ngt_resolve(ctx.proposals, ctx, delta, weights, mode != "ngt_plain", catalog, rules)
    hold = _failed_ids(ctx)
    if not tcot:
        return resolved, flat_schedule(resolved.synthesis_order, ctx.obs.time, hold)
    temporal = tcot_decompose(resolved.synthesis_order, ctx.obs, delta, catalog, rules, hold)
    return resolved, temporal


def plan(ctx: PlanContext, backend=None, delta: int = 180, mode: str = "ngt", rules: Rules = Rules(),
         catalog: Optional[ActionCatalog] = None, origin: Optional[int] = None, tcot: bool = True) -> tuple:
    """Return ``(FinalPlan, PlannerTrace)`` for one planning cycle.

    ``tcot=False`` skips the immediate/short/long decomposition and
    schedules the synthesized order all at once.
    """
    if not ctx.proposals:
        raise NoProposals("planner context has no proposals")
    if mode not in MODES:
        raise ValueError(f"unknown planner mode {mode!r}")
    backend = backend if backend is not None else Deterministic()
    catalog = catalog or load_catalog(ctx.obs.own.race)
    origin = next(_invocations) if origin is None else origin
    now = ctx.obs.time
    trace = PlannerTrace(origin, now, mode, type(backend).__name__, _summarize(ctx.proposals))

    if mode == "direct":
        final = direct_plan(min(ctx.proposals, key=lambda p: p.agent_id), now, delta, origin)
        trace.final = [[e.action_id, e.earliest_time] for e in final.entries]
        return final, trace

    weights = backend.weights if isinstance(backend, Deterministic) else PlannerWeights()
    if isinstance(backend, External):
        request = protocol.make_request(PLANNER_SYSTEM, render_planner_context(ctx), backend.agent.temperature,
                                        backend.agent.max_actions)
        try:
            text = protocol.exchange(backend.endpoint if backend.endpoint is not None else backend.agent.endpoint,
                                     request, backend.agent.timeout)
            actions, issues = parse_action_sequence(text, catalog)
            if not actions:
                raise protocol.MalformedReply("planner reply holds no actions")
        except (protocol.MalformedReply, protocol.Timeout) as exc:
            trace.fallback = f"{type(exc).__name__}: {exc}"
        else:
            order = [a.action_id for a in sorted(actions, key=lambda a: a.offset)]
            proposed = {s.action_id for p in ctx.proposals for s in p.window}
            invented = [a for a in order if a not in proposed]
            if invented:
                trace.flags.append("actions outside proposals: " + ", ".join(invented))
            trace.flags += [str(i) for i in issues]
            hold = _failed_ids(ctx)
            temporal = (tcot_decompose(order, ctx.obs, delta, catalog, rules, hold) if tcot
                        else flat_schedule(order, now, hold))
            final = emit(temporal, now, delta, origin)
            trace.temporal = temporal.to_dict()
            trace.final = [[e.action_id, e.earliest_time] for e in final.entries]
            return final, trace

    resolved, temporal = _deterministic(ctx, delta, weights, mode, catalog, rules, tcot)
    final = emit(temporal, now, delta, origin)
    trace.resolved = resolved.to_dict()
    trace.temporal = temporal.to_dict()
    trace.final = [[e.action_id, e.earliest_time] for e in final.entries]
    return final, trace
