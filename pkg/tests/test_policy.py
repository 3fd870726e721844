import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddg_mapf.distance import FieldCache
from ddg_mapf.errors import FormatError, NonFiniteScore
from ddg_mapf.generators import generate_instance
from ddg_mapf.grid import Action, find_conflicts
from ddg_mapf.policy import (CrowdGreedyPolicy, ExpertPolicy, GreedyPolicy, LinearPolicy,
                             PolicyParams, RandomPolicy, Termination, act_greedy, act_policy,
                             features, greedy_params, load_params, rollout, save_params, softmax)
from ddg_mapf.solvers import SolverBudget
from ddg_mapf.tokens import observe_tokens

from conftest import instances

GREEDY = greedy_params()


def test_zero_params_uniform():
    p = PolicyParams.zeros()
    tok = np.zeros(256, dtype=np.uint8)
    a, dist = act_policy(p, tok)
    assert a == Action.UP and np.allclose(dist, 0.2)


def test_features_are_position_major():
    tok = np.arange(256) % 67
    f = features(tok)
    assert f[0] == 0 and f[1] == 67 + 1 and f.max() < 256 * 67


def test_softmax_rejects_non_finite():
    with pytest.raises(NonFiniteScore):
        softmax(np.array([np.nan, 0, 0, 0, 0]))
    assert np.allclose(softmax(np.array([1000.0, 0, 0, 0, 0]))[0], 1.0)


def test_sample_mode_needs_rng():
    with pytest.raises(ValueError):
        act_policy(PolicyParams.zeros(), np.zeros(256, np.uint8), "sample")


@given(instances(max_side=12, max_agents=12), st.integers(0, 10**6))
def test_greedy_params_reproduce_act_greedy(inst, seed):
    rng = np.random.default_rng(seed)
    fields = FieldCache().get_many(inst.map, inst.goals)
    pos = inst.starts
    occ = {p: i for i, p in enumerate(pos)}
    hist = [list(rng.integers(5, size=3)) for _ in pos]
    for i in range(inst.n_agents):
        tok = observe_tokens(inst.map, pos, i, fields, hist, occ)
        a, _ = act_policy(GREEDY, tok)
        assert a == act_greedy(inst.map, pos[i], fields[i], occ)


def test_params_roundtrip(tmp_path):
    p = PolicyParams(np.random.default_rng(0).normal(size=PolicyParams.zeros().weights.shape))
    save_params(p, tmp_path / "w.params")
    q = load_params(tmp_path / "w.params")
    assert np.array_equal(p.weights, q.weights) and q.tag == p.tag
    raw = bytearray((tmp_path / "w.params").read_bytes())
    raw[100] ^= 1
    (tmp_path / "bad.params").write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load_params(tmp_path / "bad.params")
    (tmp_path / "short.params").write_bytes(bytes(raw[:20]))
    with pytest.raises(FormatError):
        load_params(tmp_path / "short.params")


def test_rollout_all_at_goal_start():
    inst = generate_instance("empty", 2, 0, 5)
    done = inst.with_starts(inst.goals)
    ro = rollout(GreedyPolicy(), done, 10)
    assert ro.termination is Termination.ALL_AT_GOALS and len(ro) == 1 and ro.steps == 0


def test_single_agent_greedy_reaches_goal():
    inst = generate_instance("maze", 1, 3, 9)
    ro = rollout(GreedyPolicy(), inst, 128)
    assert ro.termination is Termination.ALL_AT_GOALS
    assert ro.states[-1].positions == inst.goals


def test_expert_playback_succeeds():
    inst = generate_instance("empty", 6, 2, 6)
    ro = rollout(ExpertPolicy(SolverBudget(None, 3000), seed=0), inst, 64)
    assert ro.termination is Termination.ALL_AT_GOALS


@given(instances(max_side=10, max_agents=12), st.integers(0, 1000))
def test_rollouts_conflict_free_and_history_consistent(inst, seed):
    for pol in (RandomPolicy(), CrowdGreedyPolicy(), LinearPolicy(GREEDY, "sample")):
        ro = rollout(pol, inst, 20, seed)
        W = inst.map.width
        for t in range(ro.steps):
            a = np.array([r * W + c for r, c in ro.states[t].positions])
            b = np.array([r * W + c for r, c in ro.states[t + 1].positions])
            v, e = find_conflicts(inst.map, a, b)
            assert not v and not e
        h = ro.history_before(ro.steps)
        assert all(len(x) == ro.steps for x in h)


def test_rollout_deterministic_for_seed():
    inst = generate_instance("random", 8, 5, 12)
    a = rollout(LinearPolicy(GREEDY, "sample"), inst, 30, 4)
    b = rollout(LinearPolicy(GREEDY, "sample"), inst, 30, 4)
    assert a.states == b.states
