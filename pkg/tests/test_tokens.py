import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddg_mapf import tokens as T
from ddg_mapf.distance import FieldCache
from ddg_mapf.errors import UnknownId
from ddg_mapf.grid import Action, GridMap, MAPFInstance
from ddg_mapf.tokens import VOCAB, build_observation, describe_tokens, observe_tokens, tokenize

from conftest import instances


def test_vocabulary_size_and_groups():
    assert len(VOCAB) == 67
    assert VOCAB.id("PAD") == 0
    assert VOCAB.name(T.NUM_ZERO) == "NUM_+0"
    assert VOCAB.id("AGENT_+12") == 66
    with pytest.raises(UnknownId):
        VOCAB.name(67)
    assert len(VOCAB.table().strip().splitlines()) == 68  # header + 67 rows


def test_layout_positions():
    assert T.POS_SELF == 122 and T.POS_HISTORY == 126 and T.POS_AGENTS == 131
    assert T.POS_AGENTS + 1 + T.MAX_NEARBY * T.RECORD < T.CONTEXT
    assert T.fov_position(0, 0) == 61 and T.fov_position(-5, -5) == 1


def _single(grid, start, goal, history=((),)):
    inst = MAPFInstance(grid, (start,), (goal,))
    fields = FieldCache().get_many(grid, inst.goals)
    return observe_tokens(grid, inst.starts, 0, fields, [list(h) for h in history])


def test_lone_agent_tokens():
    g = GridMap.empty(5, 5)
    seq = _single(g, (0, 0), (2, 3))
    assert seq[0] == T.SEP_FOV and seq[T.POS_SELF] == T.SEP_SELF
    assert seq[T.fov_position(-1, 0)] == T.OUT_OF_BOUNDS
    assert seq[T.fov_position(0, 0)] == T.NUM_ZERO
    assert seq[T.fov_position(1, 0)] == T.NUM_ZERO - 1  # one step closer
    assert seq[T.fov_position(0, 1)] == T.NUM_ZERO - 1
    assert list(seq[T.POS_SELF + 1 : T.POS_SELF + 4]) == [T.NUM_ZERO + 2, T.NUM_ZERO + 3, T.NUM_ZERO + 5]
    assert list(seq[T.POS_HISTORY + 1 : T.POS_AGENTS]) == [T.ACT_NONE] * 4
    assert seq[T.POS_AGENTS + 1] == T.SEP_END
    assert (seq[T.POS_AGENTS + 2 :] == T.PAD).all()


def test_history_keeps_last_four():
    g = GridMap.empty(5, 5)
    h = [Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT, Action.WAIT]
    seq = _single(g, (2, 2), (0, 0), [h])
    assert list(seq[T.POS_HISTORY + 1 : T.POS_AGENTS]) == [T.ACT_BASE + int(a) for a in h[1:]]


def test_clamped_distance_and_unreachable():
    g = GridMap.empty(1, 30)
    seq = _single(g, (0, 0), (0, 29))
    assert seq[T.POS_SELF + 3] == T.NUM_ZERO + 12 and seq[T.POS_SELF + 2] == T.NUM_ZERO + 12
    walled = GridMap.from_array(np.array([[0, 1, 0, 0]], dtype=bool))
    seq = _single(walled, (0, 2), (0, 3))
    assert seq[T.fov_position(0, -2)] == T.UNREACHABLE_TOKEN
    assert seq[T.fov_position(0, -1)] == T.OBSTACLE


def test_neighbour_records():
    g = GridMap.empty(7, 7)
    inst = MAPFInstance(g, ((3, 3), (3, 4), (0, 0)), ((0, 0), (6, 6), (6, 0)))
    fields = FieldCache().get_many(g, inst.goals)
    seq = observe_tokens(g, inst.starts, 0, fields, [[], [Action.LEFT], []])
    # agent 1 is adjacent and closer than agent 2
    assert seq[T.fov_position(0, 1)] == T.AGENT_ZERO + (fields[0][(3, 4)] - fields[0][(3, 3)])
    rec = seq[T.POS_AGENTS + 1 : T.POS_AGENTS + 1 + T.RECORD]
    assert list(rec[:5]) == [T.SEP_AGENT, T.NUM_ZERO, T.NUM_ZERO + 1, T.NUM_ZERO + 3, T.NUM_ZERO + 2]
    assert rec[-1] == T.ACT_BASE + int(Action.LEFT)
    rec2 = seq[T.POS_AGENTS + 1 + T.RECORD : T.POS_AGENTS + 1 + 2 * T.RECORD]
    assert list(rec2[1:3]) == [T.NUM_ZERO - 3, T.NUM_ZERO - 3]


def test_at_most_twelve_neighbours():
    g = GridMap.empty(11, 11)
    starts = tuple((r, c) for r in range(0, 11, 2) for c in range(0, 11, 2))[:30]
    inst = MAPFInstance(g, starts, starts[::-1])
    fields = FieldCache().get_many(g, inst.goals)
    seq = observe_tokens(g, starts, 14, fields, [[] for _ in starts])
    assert (seq == T.SEP_AGENT).sum() == 12
    assert len(seq) == 256


@given(instances(max_side=14, max_agents=20), st.integers(0, 10**6))
def test_fuzzed_sequences_valid_and_deterministic(inst, seed):
    rng = np.random.default_rng(seed)
    fields = FieldCache().get_many(inst.map, inst.goals)
    hist = [list(rng.integers(5, size=rng.integers(0, 7))) for _ in inst.starts]
    a = int(rng.integers(inst.n_agents))
    s1 = observe_tokens(inst.map, inst.starts, a, fields, hist)
    s2 = observe_tokens(inst.map, inst.starts, a, fields, hist)
    assert s1.shape == (256,) and s1.dtype == np.uint8
    assert s1.max() < 67
    assert np.array_equal(s1, s2)
    obs = build_observation(inst.map, inst.starts, a, fields, hist)
    assert obs == build_observation(inst.map, inst.starts, a, fields, hist)
    assert np.array_equal(tokenize(obs), s1)


def test_describe_tokens():
    g = GridMap.empty(5, 5)
    text = describe_tokens(_single(g, (0, 0), (2, 3)))
    assert text.splitlines()[0] == "[0] SEP_FOV"
    assert "SEP_END" in text and text.endswith("PAD ×123")
    with pytest.raises(UnknownId):
        describe_tokens([70])
