import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from ddg_mapf.generators import generate_instance
from ddg_mapf.grid import GridMap, MAPFInstance, parse_map

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def grids(draw, max_side=8, density=0.3):
    h = draw(st.integers(2, max_side))
    w = draw(st.integers(2, max_side))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    return GridMap.from_array(rng.random((h, w)) < density)


@st.composite
def instances(draw, max_side=8, max_agents=6, density=0.2):
    seed = draw(st.integers(0, 2**31))
    n = draw(st.integers(1, max_agents))
    side = draw(st.integers(5, max_side))
    return generate_instance("random", n, seed, side)


@pytest.fixture
def ring():
    # 3x3 ring around a blocked centre
    return parse_map("...\n.@.\n...\n")


@pytest.fixture
def swap_instance(ring):
    return MAPFInstance(ring, ((0, 0), (0, 2)), ((0, 2), (0, 0)))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
