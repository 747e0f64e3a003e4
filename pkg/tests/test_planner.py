import random
from collections import Counter

import pytest
from conftest import feasible_window, random_context, random_states

from hima.advisors import Proposal
from hima.clustering import StrategicLabel
from hima.config import AgentConfig
from hima.demos import WindowStep
from hima.execloop import FailureRecord
from hima.planner import (Deterministic, External, PlanContext, flat_schedule, ngt_resolve, plan, simple_merge,
                          tcot_decompose)
from hima.textio import NoProposals
from hima.world.catalog import load_catalog
from hima.world.engine import check, enqueue, new_game
from hima.world.types import Feasibility, FeasibilityKind, Observation, Race

CAT = load_catalog("protoss")
STATES = random_states(21, 900, every=3) + random_states(22, 900, every=3) + random_states(23, 300)


def _obs(minerals=50, gas=0, workers=None, buildings=None, techs=(), t=0):
    p = new_game(("protoss", "zerg"), 0).players[0]
    p.minerals, p.gas = minerals, gas
    if workers is not None:
        p.units["Probe"] = workers
        p.supply_used = workers
    p.buildings.update(buildings or {})
    p.techs.update(techs)
    return Observation(t, 0, p, Race.Zerg)


def _prop(agent, *ids, label=None, spacing=10):
    return Proposal(agent, tuple(WindowStep(a, i * spacing) for i, a in enumerate(ids)), "tr", "so", label)


def _contexts(n, seed):
    rng = random.Random(seed)
    return [random_context(rng, STATES, CAT, rng.randint(1, 5)) for _ in range(n)]


def immediates_valid(obs, immediate):
    scratch = obs.own.copy()
    for aid in immediate:
        if not check(scratch, CAT, aid).ok:
            return False
        if not CAT.by_id[aid].is_command:
            enqueue(scratch, CAT.by_id[aid])
    return True


# ---------------------------------------------------------------- properties

@pytest.mark.parametrize("seed,mode", [(1, "ngt"), (2, "ngt_plain"), (3, "simple")])
def test_plan_properties_on_random_contexts(seed, mode):
    for ctx in _contexts(200, seed):
        final, trace = plan(ctx, Deterministic(), 180, mode, origin=1)
        buckets = trace.temporal
        order = trace.resolved["synthesis_order"]
        flat = buckets["immediate"] + [a for a, _ in buckets["short_term"]] + buckets["long_term"]
        assert Counter(flat) == Counter(order)
        assert immediates_valid(ctx.obs, buckets["immediate"])
        proposed = Counter(s.action_id for p in ctx.proposals for s in p.window)
        assert all(proposed[a] >= n for a, n in Counter(final.action_ids).items())
        times = [e.earliest_time for e in final.entries]
        assert times == sorted(times) and all(now == ctx.obs.time for now in times[:len(buckets["immediate"])])
        assert all(ctx.obs.time < t <= ctx.obs.time + 180 for _, t in buckets["short_term"])
        assert plan(ctx, Deterministic(), 180, mode, origin=1)[1].to_dict() == trace.to_dict()


def test_unanimity_on_random_identical_proposals():
    rng = random.Random(5)
    for _ in range(200):
        p, t = rng.choice(STATES)
        window = feasible_window(p, rng, rng.randint(1, 8), CAT) or (WindowStep("Scout", 0),)
        ctx = PlanContext(Observation(t, 0, p, Race.Zerg), [Proposal(i, window, "tr", "so") for i in range(3)])
        final, _ = plan(ctx)
        assert Counter(final.action_ids) == Counter(s.action_id for s in window)


def test_unanimity_holds_for_arbitrary_windows():
    rng = random.Random(6)
    for ctx in _contexts(200, 7):
        common = ctx.proposals[0].window
        ctx.proposals = [Proposal(i, common, "tr", "so") for i in range(rng.randint(2, 4))]
        final, _ = plan(ctx)
        assert Counter(final.action_ids) == Counter(s.action_id for s in common)


def test_unanimity_example_passes_through():
    obs = _obs(minerals=50)
    final, _ = plan(PlanContext(obs, [_prop(i, "TrainProbe", "BuildPylon") for i in range(3)]))
    assert final.action_ids == ["TrainProbe", "BuildPylon"]
    assert final.entries[0].earliest_time == 0 and final.entries[1].earliest_time > 0


# ---------------------------------------------------------------- group resolution

def test_agreed_precedes_isolated():
    obs = _obs(minerals=1000, gas=1000, buildings={"Pylon": 1, "Gateway": 1, "Stargate": 1, "FleetBeacon": 1})
    props = [_prop(0, "TrainZealot"), _prop(1, "TrainZealot"), _prop(2, "TrainCarrier")]
    res = ngt_resolve(props, PlanContext(obs, props))
    assert res.synthesis_order == ["TrainZealot", "TrainCarrier"]
    assert res.agreed == [("TrainZealot", (0, 1))] and res.adopted_isolated == ["TrainCarrier"]
    assert res.conflict_resolutions == []


def test_single_proposal_is_adopted_in_order():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1})
    props = [_prop(0, "TrainZealot", "BuildForge", "TrainProbe")]
    res = ngt_resolve(props, PlanContext(obs, props))
    assert res.agreed == [] and res.adopted_isolated == ["TrainZealot", "BuildForge", "TrainProbe"]
    assert res.synthesis_order == res.adopted_isolated


def test_unique_structure_kept_once():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1})
    props = [_prop(0, "BuildCyberneticsCore"), _prop(1, "BuildCyberneticsCore")]
    assert ngt_resolve(props, PlanContext(obs, props)).synthesis_order == ["BuildCyberneticsCore"]
    props = [_prop(0, "BuildCyberneticsCore", "BuildCyberneticsCore"), _prop(1, "BuildCyberneticsCore")]
    res = ngt_resolve(props, PlanContext(obs, props))
    assert res.synthesis_order == ["BuildCyberneticsCore"]
    assert [c.kind for c in res.conflict_resolutions] == ["duplicate"]


def test_owned_unique_action_from_one_advisor_is_dropped():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1, "CyberneticsCore": 1})
    props = [_prop(0, "BuildCyberneticsCore", "TrainZealot"), _prop(1, "TrainProbe")]
    res = ngt_resolve(props, PlanContext(obs, props))
    assert "BuildCyberneticsCore" not in res.synthesis_order
    assert res.conflict_resolutions[0].kind == "duplicate"


def test_resource_conflict_drops_exactly_one():
    obs = _obs(minerals=250, workers=0, buildings={"Pylon": 1})
    props = [_prop(0, "BuildGateway"), _prop(1, "BuildForge")]
    res = ngt_resolve(props, PlanContext(obs, props))
    assert res.budget == (250, 0)
    [conflict] = res.conflict_resolutions
    assert conflict.kind == "resources" and conflict.winners == ["BuildGateway"] and conflict.losers == ["BuildForge"]
    assert res.synthesis_order == ["BuildGateway"]


def test_resource_conflict_prefers_feasible_and_aligned():
    obs = _obs(minerals=200, workers=0, buildings={"Pylon": 1})
    props = [_prop(0, "TrainZealot"), _prop(1, "BuildForge", label=StrategicLabel.GroundSupportFocus)]
    res = ngt_resolve(props, PlanContext(obs, props))
    conflict = res.conflict_resolutions[0]
    assert conflict.scores == {"TrainZealot@0#0": 0.5, "BuildForge@1#0": 2.0}


def test_simple_merge_keeps_every_action():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1})
    props = [_prop(0, "TrainZealot"), _prop(1, "TrainZealot", "TrainProbe")]
    res = simple_merge(props, PlanContext(obs, props))
    assert Counter(res.synthesis_order) == Counter({"TrainZealot": 2, "TrainProbe": 1})


# ---------------------------------------------------------------- temporal breakdown

def test_tcot_worked_example():
    obs = _obs(minerals=150, buildings={"Pylon": 1})
    tp = tcot_decompose(["BuildGateway", "TrainZealot", "ResearchCharge"], obs, 180, CAT)
    assert tp.immediate == ["BuildGateway"]
    assert [a for a, _ in tp.short_term] == ["TrainZealot"]
    assert tp.long_term == ["ResearchCharge"]
    gateway_done = CAT.by_id["BuildGateway"].build_time
    assert tp.short_term[0][1] >= gateway_done


def test_tcot_all_feasible_now():
    obs = _obs(minerals=1000, buildings={"Pylon": 1})
    order = ["BuildGateway", "BuildForge", "TrainProbe"]
    tp = tcot_decompose(order, obs, 180, CAT)
    assert tp.immediate == order and tp.short_term == [] and tp.long_term == []


def test_tcot_starvation():
    obs = _obs(minerals=0, workers=0, buildings={"Pylon": 1})
    order = ["BuildGateway", "TrainProbe", "BuildForge"]
    tp = tcot_decompose(order, obs, 180, CAT)
    assert tp.immediate == [] and tp.short_term == [] and tp.long_term == order


def test_redundant_unique_action_waits_for_the_next_cycle():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1})
    tp = tcot_decompose(["BuildCyberneticsCore", "BuildCyberneticsCore"], obs, 180, CAT)
    assert tp.immediate == ["BuildCyberneticsCore"] and tp.long_term == ["BuildCyberneticsCore"]


def test_flat_schedule_without_decomposition():
    obs = _obs(minerals=300, workers=0, buildings={"Pylon": 1})
    props = [_prop(0, "BuildGateway", "TrainZealot")]
    final, trace = plan(PlanContext(obs, props), tcot=False)
    assert [(e.action_id, e.earliest_time) for e in final.entries] == [("BuildGateway", 0), ("TrainZealot", 0)]
    assert flat_schedule(["A", "B"], 10, {"A"}).short_term == [("A", 11)]


# ---------------------------------------------------------------- feedback and backends

def test_failed_action_is_not_repeated_immediately():
    obs = _obs(minerals=1000, buildings={"Pylon": 1, "Gateway": 1}, t=200)
    fail = FailureRecord(190, "TrainZealot", Feasibility(FeasibilityKind.InsufficientResources), 2)
    ctx = PlanContext(obs, [_prop(i, "TrainZealot", "TrainProbe") for i in range(3)], [fail])
    final, trace = plan(ctx)
    assert "TrainZealot" not in trace.temporal["immediate"]
    assert ("TrainZealot", 201) in [(e.action_id, e.earliest_time) for e in final.entries]


def test_direct_mode_uses_lowest_agent_window():
    obs = _obs(t=60)
    final, trace = plan(PlanContext(obs, [_prop(2, "TrainProbe"), _prop(1, "BuildPylon", "TrainProbe")]),
                        mode="direct", delta=180)
    assert [(e.action_id, e.earliest_time) for e in final.entries] == [("BuildPylon", 60), ("TrainProbe", 70)]


def test_errors():
    with pytest.raises(NoProposals):
        plan(PlanContext(_obs(), []))
    with pytest.raises(ValueError):
        plan(PlanContext(_obs(), [_prop(0, "TrainProbe")]), mode="vote")


def test_external_backend_garbage_falls_back():
    ctx = PlanContext(_obs(), [_prop(i, "TrainProbe") for i in range(3)])
    final, trace = plan(ctx, External(lambda r: {"output": "garbage"}), origin=3)
    expected, _ = plan(ctx, Deterministic(), origin=3)
    assert trace.fallback and final == expected


def test_external_backend_unreachable_falls_back():
    ctx = PlanContext(_obs(), [_prop(0, "TrainProbe")])
    _, trace = plan(ctx, External("http://127.0.0.1:9/", AgentConfig(timeout=0.2)))
    assert trace.fallback.startswith("Timeout")


def test_external_backend_reply_is_decomposed_and_flagged():
    seen = {}

    def endpoint(request):
        seen.update(request)
        return {"output": "1. Build Pylon\n2. Train Probe\n3. Build Forge (+30 s)"}
    ctx = PlanContext(_obs(minerals=200), [_prop(i, "TrainProbe", "BuildPylon") for i in range(3)])
    final, trace = plan(ctx, External(endpoint))
    assert trace.fallback is None and final.action_ids[:2] == ["BuildPylon", "TrainProbe"]
    assert any("BuildForge" in f for f in trace.flags)
    assert "=== Advisor proposals ===" in seen["input"]
