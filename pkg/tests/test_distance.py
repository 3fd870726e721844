import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddg_mapf.distance import UNREACHABLE, FieldCache, compute_field
from ddg_mapf.errors import GoalBlocked
from ddg_mapf.grid import GridMap

from conftest import grids


def flood_oracle(blocked, goal):
    """Repeated min-relaxation over whole arrays until nothing changes."""
    big = 10**9
    d = np.full(blocked.shape, big, dtype=np.int64)
    d[goal] = 0
    while True:
        p = np.pad(d, 1, constant_values=big)
        nb = np.minimum.reduce([p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]]) + 1
        new = np.where(blocked, big, np.minimum(d, nb))
        if np.array_equal(new, d):
            return np.where(d >= big, UNREACHABLE, d)
        d = new


@given(grids(max_side=10), st.integers(0, 10**6))
def test_field_matches_flood_oracle(g, pick):
    free = g.free_cells()
    if not free:
        return
    goal = free[pick % len(free)]
    f = compute_field(g, goal)
    assert np.array_equal(f.full((g.height, g.width)), flood_oracle(g.blocked, goal))


def test_known_values():
    g = GridMap.from_array(np.array([[0, 0, 0], [1, 1, 0], [0, 0, 0]], dtype=bool))
    f = compute_field(g, (2, 0))
    assert f[(0, 0)] == 6 and f[(2, 2)] == 2 and f[(2, 0)] == 0
    assert f[(1, 0)] == UNREACHABLE


def test_goal_blocked():
    g = GridMap.from_array(np.array([[0, 1]], dtype=bool))
    with pytest.raises(GoalBlocked):
        compute_field(g, (0, 1))


def test_window_on_empty_map_is_manhattan():
    g = GridMap.empty(40, 40)
    f = compute_field(g, (20, 20), (10, 12, 30, 33))
    assert f.value((10, 12)) == 18 and f.value((25, 30)) == 15
    assert f.value((0, 0)) == UNREACHABLE  # outside the window


def test_cache_computes_once():
    g = GridMap.empty(5, 5)
    c = FieldCache()
    a = c.get(g, (1, 1))
    b = c.get(GridMap.empty(5, 5), (1, 1))  # equal content, different object
    assert a is b and c.computed == 1
    c.get_many(g, [(1, 1), (2, 2), (2, 2)])
    assert c.computed == 2
