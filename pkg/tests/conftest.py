import random

import pytest

from hima.advisors import AdvisorPool, Proposal, RetrievalAdvisor
from hima.clustering import StrategicLabel, StrategicObjective
from hima.demos import DemoSample, WindowStep
from hima.harness.match import External
from hima.textio import render_state
from hima.world.catalog import load_catalog
from hima.world.engine import apply_action_inplace, check, enqueue, new_game, tick_inplace, validate_action
from hima.world.types import Observation, PlayerState, Race


@pytest.fixture(scope="session")
def protoss():
    return load_catalog("protoss")


@pytest.fixture(scope="session")
def zerg():
    return load_catalog("zerg")


@pytest.fixture(scope="session")
def terran():
    return load_catalog("terran")


@pytest.fixture(scope="session")
def default_pool():
    from hima.harness.pipeline import default_pool as build
    return build("protoss")


def fixed_pool(window_ids, k=3, spacing=10, race="protoss"):
    """k identical advisors that always propose ``window_ids`` from the start state."""
    cat = load_catalog(race)
    text = render_state(new_game((race, "zerg"), 0).players[0], 0, cat)
    window = tuple(WindowStep(a, i * spacing) for i, a in enumerate(window_ids))
    advisors = [RetrievalAdvisor(i, StrategicObjective(i, StrategicLabel.GroundSupportFocus, "build the economy"),
                                 [DemoSample(text, window, "economy first", cluster_id=i)], cat)
                for i in range(k)]
    return AdvisorPool(advisors, cat)


def silent_zerg():
    """An opponent that only ever asks for drones."""
    return External(endpoint=lambda request: {"output": "1. Train Drone"}, period=180)


def zergling_rush(period=30):
    """An opponent that masses zerglings and attacks with them."""
    reply = "\n".join(["1. Build Spawning Pool", "2. Train Overlord"] +
                      [f"{i}. Train Zergling" for i in range(3, 15)] + ["15. Attack"])
    return External(endpoint=lambda request: {"output": reply}, period=period)


def assert_invariants(st_):
    for i, p in enumerate(st_.players):
        cat = st_.catalogs[i]
        assert 0 <= p.supply_used <= p.supply_cap <= 200
        assert p.minerals >= 0 and p.gas >= 0
        assert all(n >= 0 for n in p.units.values()) and all(n >= 0 for n in p.buildings.values())
        assert p.minerals == p.start_minerals + p.harvested_minerals + p.injected_minerals - p.spent_minerals
        assert p.gas == p.start_gas + p.harvested_gas + p.injected_gas - p.spent_gas
        assert all(u in cat.by_produces for u in p.units)
        assert all(b in cat.by_produces for b in p.buildings)
        assert all(t in cat.tech_ids for t in p.techs)


def random_states(seed, ticks, race="protoss", every=1):
    """Copies of player 0's state along a game of random legal actions."""
    rng = random.Random(seed)
    st = new_game((race, "zerg"), seed)
    ids = [a.id for a in st.catalogs[0] if not a.is_command]
    out = []
    for _ in range(ticks):
        if not st.ongoing:
            break
        for _ in range(3):
            aid = rng.choice(ids)
            if validate_action(st, 0, aid).ok:
                apply_action_inplace(st, 0, aid)
        tick_inplace(st)
        if st.tick % every == 0:
            out.append((PlayerState.from_dict(st.players[0].to_dict()), st.tick))
    return out


def feasible_window(p, rng, n, catalog, spacing=5):
    """Up to ``n`` random actions that are each valid after paying for the earlier ones."""
    scratch = p.copy()
    ids = [a.id for a in catalog]
    steps = []
    for _ in range(40 * n):
        if len(steps) == n:
            break
        aid = rng.choice(ids)
        if check(scratch, catalog, aid).ok:
            if not catalog.by_id[aid].is_command:
                enqueue(scratch, catalog.by_id[aid])
            steps.append(WindowStep(aid, len(steps) * spacing))
    return tuple(steps)


def random_window(rng, catalog, n):
    steps = sorted(rng.randrange(180) for _ in range(n))
    return tuple(WindowStep(rng.choice([a.id for a in catalog]), t - steps[0]) for t in steps)


def random_context(rng, states, catalog, k=3):
    """A planner context over a random reachable state and ``k`` random proposals."""
    from hima.planner import PlanContext
    p, t = rng.choice(states)
    labels = list(StrategicLabel) + [None]
    props = [Proposal(i, random_window(rng, catalog, rng.randint(1, 8)), "tr", "so", rng.choice(labels))
             for i in range(k)]
    return PlanContext(Observation(t, 0, p, Race.Zerg), props)


def no_immediate_repetition(trace: dict, failed_ids, own, catalog) -> bool:
    """A failed action may be immediate again only when the prerequisites it
    still lacks are built by entries ahead of it in the same plan."""
    final = [aid for aid, _ in trace["final"]]
    for i, aid in enumerate(trace["temporal"]["immediate"]):
        if aid not in failed_ids:
            continue
        spec = catalog.by_id[aid]
        missing = [m for m in spec.prerequisites if not own.has(m)]
        earlier = {catalog.by_id[a].produces for a in final[:i]}
        if not missing or not set(missing) <= earlier:
            return False
    return True


# criterion number -> (title, passed, note), filled in by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, note = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {note}")
