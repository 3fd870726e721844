import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddg_mapf.dataset import Dataset
from ddg_mapf.ddg import (DELTA_MAX, DdgConfig, DeltaRecord, deltas_from_costs, extract_candidates,
                          harvest, probe_deltas, process_dagger_instance, process_ddg_instance,
                          replay_check, run_dagger_phase, run_generation_phase, select_state)
from ddg_mapf.distance import FieldCache
from ddg_mapf.experiments import toy_ddg_config
from ddg_mapf.grid import JointState
from ddg_mapf.policy import ExpertPolicy, RandomPolicy, Rollout, Termination, rollout
from ddg_mapf.solvers import SolverBudget, Status

from oracles import straight_line_select


def fake_rollout(steps, term=Termination.STEP_LIMIT):
    states = [JointState(((0, t),), t) for t in range(steps + 1)]
    return Rollout(states, [()] * steps, term)


def recs(deltas):
    return [DeltaRecord(i, None, None, d, Status.SOLVED, Status.SOLVED) for i, d in enumerate(deltas)]


def cands(n):
    return [(16 * i, JointState(((0, i),), 16 * i)) for i in range(n)]


def test_defaults():
    c = DdgConfig()
    assert (c.h, c.k, c.delta_min, c.size, c.iterations, c.mix, c.agents) == (16, 32, 3, 409_600, 1000, 0.25, 32)
    assert c.maze_fraction == 0.9 and c.ring_capacity == 4 * c.size
    for bad in (dict(h=0), dict(k=0), dict(size=0), dict(mix=0.0), dict(mix=1.0)):
        with pytest.raises(ValueError):
            DdgConfig(**bad)


def test_extract_candidates_examples():
    assert [t for t, _ in extract_candidates(fake_rollout(64), 16)] == [0, 16, 32, 48]
    assert [t for t, _ in extract_candidates(fake_rollout(10), 16)] == [0]
    assert [t for t, _ in extract_candidates(fake_rollout(5, Termination.ALL_AT_GOALS), 16)] == [0]
    assert all(s.timestep == t for t, s in extract_candidates(fake_rollout(40), 7))


@given(st.integers(0, 200), st.integers(1, 40))
def test_extract_candidates_property(steps, h):
    ts = [t for t, _ in extract_candidates(fake_rollout(steps), h)]
    assert ts == list(range(0, steps, h))


def test_delta_arithmetic():
    assert deltas_from_costs([47, 50, 49]) == [3, -1]
    assert deltas_from_costs([5, 5, 5]) == [0, 0]
    assert deltas_from_costs([5, None, 7]) == [DELTA_MAX, None]
    assert deltas_from_costs([5]) == []


def test_select_state_examples():
    assert select_state(recs([3, -1]), cands(3), 3) is None
    assert select_state(recs([4, 4]), cands(3), 3)[0] == 0
    assert select_state(recs([2, 7]), cands(3), 3)[0] == 1
    z, (t, s) = select_state(recs([2, 7]), cands(3), 3)
    assert t == 16 and s.positions == ((0, 1),)  # the state before the degradation
    assert select_state(recs([None, math.inf]), cands(3), 3)[0] == 1
    assert select_state(recs([0, 0]), cands(3), 3) is None
    assert select_state([], cands(1), 3) is None


@given(st.lists(st.one_of(st.none(), st.integers(-20, 20), st.just(math.inf)), max_size=10),
       st.integers(-5, 10))
def test_select_state_matches_longhand(deltas, delta_min):
    got = select_state(recs(deltas), cands(len(deltas) + 1), delta_min)
    defined = [(d, -i) for i, d in enumerate(deltas) if d is not None]
    if not defined or max(defined)[0] <= delta_min:
        assert got is None
    else:
        assert got[0] == -max(defined)[1]


CFG = toy_ddg_config(size=300)


def test_probe_deltas_match_oracle():
    for seed in range(5):
        inst = CFG.instance(seed)
        fields = FieldCache().get_many(inst.map, inst.goals)
        ro = rollout(RandomPolicy(), inst, 64, seed, fields=fields)
        cs = extract_candidates(ro, 16)
        got = probe_deltas(inst, cs, CFG.approx_budget)
        ts, costs, deltas, z = straight_line_select(ro.states, inst, 16, CFG.approx_budget, 3, fields)
        assert [t for t, _ in cs] == ts
        assert [r.delta for r in got] == deltas
        assert [r.cost for r in got] == costs[:-1] and [r.cost_next for r in got] == costs[1:]
        sel = select_state(got, cs, 3)
        assert (None if sel is None else sel[0]) == z


def test_probe_needs_two_candidates():
    inst = CFG.instance(1)
    assert probe_deltas(inst, [(0, JointState(inst.starts))], CFG.approx_budget) == []


def test_harvest_bounds_and_provenance():
    inst = CFG.instance(3)
    n = inst.n_agents
    hist = [[] for _ in range(n)]
    for k in (1, 3, 32):
        recs_, out, hv = harvest(inst, 40, JointState(inst.starts, 40), hist, CFG.accurate_budget,
                                 k, phase=2)
        assert out.solved
        steps = min(k, out.solution.n_steps)
        assert len(recs_) <= steps * n
        assert set(recs_["timestep"].tolist()) <= set(range(40, 40 + steps))
        assert (recs_["phase"] == 2).all() and (recs_["seed"] == inst.seed).all()
        # agents already parked for good are skipped
        for r in recs_:
            assert r["timestep"] - 40 < out.solution.costs[r["agent"]]
    all_recs, _, _ = harvest(inst, 0, JointState(inst.starts), hist, CFG.accurate_budget, 32, 0,
                             skip_at_goal=False)
    assert len(all_recs) == min(32, out.solution.n_steps) * n


def test_harvest_timeout_yields_nothing():
    inst = toy_ddg_config(agents=12).instance(5)
    recs_, out, hv = harvest(inst, 0, JointState(inst.starts), [[]] * 12, SolverBudget(None, 1), 32, 0)
    assert not out.solved and len(recs_) == 0 and hv is None


def test_generation_phase_exact_size_sorted_and_replayable():
    ds = Dataset("generated", CFG.ring_capacity)
    st_ = run_generation_phase(RandomPolicy(), CFG, ds, 0)
    assert len(ds) == CFG.size == st_.samples
    assert st_.hits >= 1 and 0 < st_.hit_rate <= 1 and st_.expert_calls == st_.hits
    key = list(zip(ds.records["seed"].tolist(), ds.records["timestep"].tolist(), ds.records["agent"].tolist()))
    assert key == sorted(key)
    checked, bad = replay_check(ds, st_.harvests, CFG, 0.2)
    assert checked == 60 and bad == 0
    # a corrupted label is caught
    ds.records["action"] = (ds.records["action"] + 1) % 5
    assert replay_check(ds, st_.harvests, CFG, 0.2)[1] == 60


def test_generation_phase_deterministic():
    a, b = Dataset(), Dataset()
    run_generation_phase(RandomPolicy(), CFG, a, 1)
    run_generation_phase(RandomPolicy(), CFG, b, 1)
    assert np.array_equal(a.records, b.records)


def test_expert_policy_rarely_degrades():
    cfg = toy_ddg_config()
    seeds = [cfg.instance_seed(0, j) for j in range(24)]
    rnd = sum(process_ddg_instance(RandomPolicy(), cfg, s, 0).selected is not None for s in seeds)
    exp = sum(process_ddg_instance(ExpertPolicy(cfg.accurate_budget), cfg, s, 0).selected is not None
              for s in seeds)
    assert rnd > 0 and exp < 0.1 * rnd


def test_dagger_stores_one_step_per_call():
    cfg = toy_ddg_config()
    res = process_dagger_instance(RandomPolicy(), cfg, cfg.instance_seed(0, 0), 0)
    solved_calls = res.expert_calls - res.expert_failures
    assert res.expert_calls == res.rollout_steps
    assert len(res.samples) <= cfg.agents * solved_calls
    by_t = np.bincount(res.samples["timestep"])
    assert set(by_t[by_t > 0].tolist()) == {cfg.agents}


def test_dagger_needs_more_calls_than_ddg():
    cfg = toy_ddg_config(size=600)
    a, b = Dataset(), Dataset()
    d = run_dagger_phase(RandomPolicy(), cfg, a, 0)
    g = run_generation_phase(RandomPolicy(), cfg, b, 0)
    assert len(a) == len(b) == 600
    assert d.expert_calls > 3 * g.expert_calls
