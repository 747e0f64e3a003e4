import math
import random
import sys
from collections import Counter

import numpy as np
import pytest
from conftest import random_states

from hima import protocol
from hima.advisors import (EmptyCluster, ExternalAdvisor, RetrievalAdvisor, build_pool,
                           state_features, text_features)
from hima.clustering import PROMPTS, ClusterModel, StrategicLabel, StrategicObjective
from hima.config import AgentConfig
from hima.demos import DemoSample, WindowStep
from hima.textio import render_state
from hima.world.catalog import load_catalog
from hima.world.types import Observation, Race

CAT = load_catalog("protoss")
OBJ = StrategicObjective(0, StrategicLabel.GroundSupportFocus, PROMPTS[StrategicLabel.GroundSupportFocus])


def oracle_features(p, t, cat):
    """Feature vector written out field by field; queued production counts as owned."""
    units, buildings, techs = Counter(p.units), Counter(p.buildings), set(p.techs)
    for q in p.queue:
        made = cat.get(q.action_id).produces
        if made in cat.tech_ids:
            techs.add(made)
        elif made in cat.building_ids:
            buildings[made] += 1
        elif made is not None:
            units[made] += 1
    v = [p.minerals / 1000, p.gas / 1000, p.supply_used / 200, p.supply_cap / 200]
    v += [units[u] / 20 for u in cat.unit_set]
    v += [buildings[b] / 10 for b in cat.building_ids]
    v += [1.0 if x in techs else 0.0 for x in cat.tech_ids]
    return v + [t / 3600]


def brute_nearest(corpus_vectors, q):
    best, best_d = -1, math.inf
    for i, v in enumerate(corpus_vectors):
        d = sum((a - b) ** 2 for a, b in zip(v, q))
        if d < best_d:
            best, best_d = i, d
    return best


def obs_for(p, t):
    return Observation(t, 0, p, Race.Zerg)


def corpus(states):
    return [DemoSample(render_state(p, t, CAT), (WindowStep("TrainProbe", 0), WindowStep("BuildPylon", i % 50)),
                       f"rationale {i}", ("r", t)) for i, (p, t) in enumerate(states)]


def test_features_match_oracle():
    for p, t in random_states(3, 800, every=7):
        assert np.allclose(state_features(p, t, CAT), oracle_features(p, t, CAT), atol=0, rtol=0)
        assert np.array_equal(text_features(render_state(p, t, CAT), CAT), state_features(p, t, CAT))


def test_retrieval_matches_brute_force():
    states = random_states(11, 900) + random_states(12, 200)
    rng = random.Random(0)
    chosen = rng.sample(states, 1000)
    adv = RetrievalAdvisor(0, OBJ, corpus(chosen), CAT)
    vectors = [oracle_features(p, t, CAT) for p, t in chosen]
    queries = random_states(13, 600) + random_states(14, 600)
    for p, t in rng.sample(queries, 250) + rng.sample(chosen, 250):
        idx = brute_nearest(vectors, oracle_features(p, t, CAT))
        prop = adv.propose(obs_for(p, t))
        assert prop.window == adv.samples[idx].window and prop.tactical_rationale == f"rationale {idx}"


def test_identical_state_returns_its_window():
    states = random_states(5, 300, every=30)
    adv = RetrievalAdvisor(0, OBJ, corpus(states), CAT)
    p, t = states[4]
    assert adv.propose(obs_for(p, t)).window == adv.samples[4].window


def test_ties_go_to_the_earliest_sample():
    p, t = random_states(5, 60)[-1]
    samples = corpus([(p, t)] * 3)
    samples = [DemoSample(s.state_text, (WindowStep(a, 0),), "x") for s, a in
               zip(samples, ["TrainProbe", "BuildPylon", "BuildGateway"])]
    adv = RetrievalAdvisor(0, OBJ, samples, CAT)
    assert adv.propose(obs_for(p, t)).action_ids == ["TrainProbe"]


def test_hand_computed_nearest():
    states = random_states(8, 400, every=40)
    adv = RetrievalAdvisor(0, OBJ, corpus(states), CAT)
    p, t = states[7]
    near = p.__class__.from_dict(p.to_dict())
    near.minerals += 3  # 0.003 away from sample 7 in the minerals coordinate
    assert adv.propose(obs_for(near, t)).window == adv.samples[7].window


def test_proposal_carries_objective():
    adv = RetrievalAdvisor(0, OBJ, corpus(random_states(1, 50, every=10)), CAT)
    prop = adv.propose(obs_for(*random_states(2, 30)[-1]))
    assert prop.strategic_objective == OBJ.prompt_text and prop.label is StrategicLabel.GroundSupportFocus


def test_empty_cluster():
    with pytest.raises(EmptyCluster):
        RetrievalAdvisor(0, OBJ, [], CAT)


def _model(k=3):
    return ClusterModel(Race.Protoss, k, CAT.unit_set, np.zeros((k, len(CAT.unit_set))), {}, 0, 1)


def _objectives(k=3):
    labels = list(StrategicLabel)
    return [StrategicObjective(i, labels[i % 3], PROMPTS[labels[i % 3]]) for i in range(k)]


def test_build_pool_partitions_samples():
    states = random_states(4, 300, every=10)
    samples = [DemoSample(s.state_text, s.window, s.rationale, s.source, cluster_id=i % 3)
               for i, s in enumerate(corpus(states))]
    pool = build_pool(_model(), samples, _objectives(), CAT)
    assert pool.k == 3 and [len(a) for a in pool.advisors] == [10, 10, 10]
    assert [a.objective.cluster for a in pool.advisors] == [0, 1, 2]
    obs = obs_for(*states[5])
    assert pool.propose_all(obs) == pool.propose_all(obs, concurrent=True)
    assert [a.agent_id for a in pool.subset([0, 2]).advisors] == [0, 2]


def test_build_pool_empty_cluster():
    samples = [DemoSample(s.state_text, s.window, cluster_id=0) for s in corpus(random_states(4, 20, every=10))]
    with pytest.raises(EmptyCluster):
        build_pool(_model(), samples, _objectives(), CAT)


def _jsd(p, q):
    keys = set(p) | set(q)
    pn = np.array([p.get(k, 0) for k in keys], float)
    qn = np.array([q.get(k, 0) for k in keys], float)
    pn, qn = pn / pn.sum(), qn / qn.sum()
    m = (pn + qn) / 2

    def kl(a, b):
        mask = a > 0
        return float((a[mask] * np.log(a[mask] / b[mask])).sum())
    return (kl(pn, m) + kl(qn, m)) / 2


def test_specialized_corpora_give_distinct_proposals():
    states = random_states(9, 600, every=5)
    plans = [["TrainZealot", "BuildGateway"], ["BuildStargate", "TrainVoidRay"], ["TrainStalker", "TrainPhoenix"]]
    samples = [DemoSample(render_state(p, t, CAT), tuple(WindowStep(a, 5 * j) for j, a in enumerate(plans[i % 3])),
                          "x", cluster_id=i % 3) for i, (p, t) in enumerate(states)]
    pool = build_pool(_model(), samples, _objectives(), CAT)
    hist = [Counter(), Counter(), Counter()]
    for p, t in random_states(10, 400, every=20):
        for prop in pool.propose_all(obs_for(p, t)):
            hist[prop.agent_id].update(CAT.get(a).category.value for a in prop.action_ids)
    assert max(_jsd(hist[i], hist[j]) for i in range(3) for j in range(i + 1, 3)) > 0


def test_external_advisor_mock_round_trip():
    seen = {}

    def endpoint(request):
        seen.update(request)
        return {"output": "1. Build Pylon"}
    adv = ExternalAdvisor(1, OBJ, "protoss", endpoint, AgentConfig(temperature=0.7))
    prop = adv.propose(obs_for(*random_states(2, 5)[-1]))
    assert prop.window == (WindowStep("BuildPylon", 0),) and not prop.flags
    assert OBJ.prompt_text in seen["system"] and seen["params"]["temperature"] == 0.7
    assert "[resources]" in seen["input"]


def test_external_advisor_degraded_reply():
    adv = ExternalAdvisor(1, OBJ, "protoss", lambda r: {"output": "1. Build Pylon\n2. Summon Dragon\n3. Train Zealot"})
    prop = adv.propose(obs_for(*random_states(2, 5)[-1]))
    assert prop.action_ids == ["BuildPylon", "TrainZealot"] and len(prop.flags) == 1


def test_external_advisor_failures():
    obs = obs_for(*random_states(2, 5)[-1])
    with pytest.raises(protocol.MalformedReply):
        ExternalAdvisor(1, OBJ, "protoss", lambda r: {"output": "nothing useful"}).propose(obs)
    with pytest.raises(protocol.MalformedReply):
        ExternalAdvisor(1, OBJ, "protoss", lambda r: {"text": "x"}).propose(obs)
    with pytest.raises(protocol.Timeout):
        ExternalAdvisor(1, OBJ, "protoss", "http://127.0.0.1:9/", AgentConfig(timeout=0.2)).propose(obs)


def test_pipe_endpoint(tmp_path):
    script = tmp_path / "agent.py"
    script.write_text("import json,sys\njson.loads(sys.stdin.readline())\nprint(json.dumps({'output': '1. Train Probe'}))\n")
    adv = ExternalAdvisor(0, OBJ, "protoss", f"pipe:{sys.executable} {script}")
    assert adv.propose(obs_for(*random_states(2, 5)[-1])).action_ids == ["TrainProbe"]

