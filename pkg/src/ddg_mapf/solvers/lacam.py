"""LaCAM-style lazy search over joint configurations with anytime refinement.

PIBT proposes successor configurations; a per-node constraint tree enumerates
the remaining successors lazily so the search is complete. After the first
solution the search keeps going: nodes whose lower bound cannot beat the best
known cost are pruned, re-discovered configurations are re-wired along cheaper
paths (Dijkstra updates), so each new goal cost is bounded by the last one.
"""

from __future__ import annotations

import enum
import json
import math
import random
import time
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from ..distance import UNREACHABLE, DistanceField, FieldCache
from ..grid import MAPFInstance, Solution, solution_costs
from .pibt import PIBT


class Status(str, enum.Enum):
    SOLVED = "Solved"
    TIMEOUT = "Timeout"
    UNSOLVABLE = "Unsolvable"


@dataclass(frozen=True)
class SolverBudget:
    time_ms: float | None = None
    node_limit: int | None = None

    def __post_init__(self):
        if self.time_ms is None and self.node_limit is None:
            raise ValueError("budget needs a time or a node cap")

    @classmethod
    def approximate(cls, node_limit: int | None = None) -> "SolverBudget":
        return cls(2000.0, node_limit)

    @classmethod
    def accurate(cls, node_limit: int | None = None) -> "SolverBudget":
        return cls(10000.0, node_limit)


@dataclass
class SolveOutcome:
    status: Status
    solution: Solution | None = None
    nodes_expanded: int = 0
    elapsed_ms: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED

    @property
    def soc(self) -> int | None:
        return self.solution.soc if self.solution else None

    def to_json(self) -> str:
        sol = self.solution
        return json.dumps({
            "status": self.status.value,
            "soc": sol.soc if sol else None,
            "makespan": sol.makespan if sol else None,
            "elapsed": round(self.elapsed_ms, 3),
            "nodes": self.nodes_expanded,
        })


class _Constraint:
    __slots__ = ("who", "where", "depth")

    def __init__(self, who=(), where=()):
        self.who = who
        self.where = where
        self.depth = len(who)


class _Node:
    __slots__ = ("Q", "parent", "order", "tree", "g", "h", "neighbors")

    def __init__(self, Q, parent, order, g, h):
        self.Q = Q
        self.parent = parent
        self.order = order
        self.tree = deque([_Constraint()])
        self.g = g
        self.h = h
        self.neighbors = {}

    @property
    def f(self):
        return self.g + self.h


def _edge_cost(Qa, Qb, goals) -> int:
    """Sum-of-loss: every agent pays 1 unless it stays on its goal."""
    return sum(1 for a, b, g in zip(Qa, Qb, goals) if not (a == g and b == g))


def solve(instance: MAPFInstance, budget: SolverBudget, seed: int | None = None,
          fields: Sequence[DistanceField] | None = None, cache: FieldCache | None = None,
          restart_rate: float = 0.001) -> SolveOutcome:
    """Anytime LaCAM-style solve; returns the cheapest valid solution found.

    With a node cap the run is deterministic for a fixed seed and a larger cap
    only continues the same search, so it never returns a costlier solution.
    """
    t0 = time.perf_counter()
    grid = instance.map
    W = grid.width
    n = instance.n_agents
    goals = tuple(r * W + c for r, c in instance.goals)
    starts = tuple(r * W + c for r, c in instance.starts)

    def outcome(status, sol=None, nodes=0):
        return SolveOutcome(status, sol, nodes, (time.perf_counter() - t0) * 1e3)

    if len(set(goals)) != n:
        return outcome(Status.UNSOLVABLE)
    if fields is None:
        cache = FieldCache() if cache is None else cache
        fields = cache.get_many(grid, instance.goals)
    dist = [f.flat if f.values.shape == grid.shape else f.full(grid.shape).ravel().tolist()
            for f in fields]
    if any(dist[i][starts[i]] == UNREACHABLE for i in range(n)):
        return outcome(Status.UNSOLVABLE)
    if starts == goals:
        return outcome(Status.SOLVED, solution_costs(instance, [[c] for c in instance.starts]))

    rng = random.Random(instance.seed if seed is None else seed)
    planner = PIBT(grid, goals, dist, rng)
    nbrs = grid.neighbors

    def heuristic(Q):
        return sum(dist[i][Q[i]] for i in range(n))

    deadline = None if budget.time_ms is None else t0 + budget.time_ms / 1e3
    node_limit = math.inf if budget.node_limit is None else budget.node_limit

    root = _Node(starts, None, planner.order(starts), 0, heuristic(starts))
    open_ = [root]
    explored = {starts: root}
    goal_node: _Node | None = None
    best: Solution | None = None
    nodes = 0

    def backtrack(node):
        path = []
        while node is not None:
            path.append(node.Q)
            node = node.parent
        path.reverse()
        return [[grid.cell(Q[i]) for Q in path] for i in range(n)]

    def consider():
        nonlocal best
        sol = solution_costs(instance, backtrack(goal_node))
        if best is None or sol.soc < best.soc:
            best = sol

    def rewire(src: _Node):
        improved = False
        q = deque([src])
        while q:
            a = q.popleft()
            for b, cost in a.neighbors.items():
                g = a.g + cost
                if g < b.g:
                    b.g = g
                    b.parent = a
                    q.append(b)
                    if b is goal_node:
                        improved = True
                    if goal_node is not None and b.f < goal_node.f:
                        open_.append(b)
        return improved

    while open_:
        if nodes >= node_limit or (deadline is not None and time.perf_counter() > deadline):
            break
        N = open_[-1]
        if goal_node is not None and N.f >= goal_node.f:
            open_.pop()
            continue
        if goal_node is None and N.Q == goals:
            goal_node = N
            consider()
            continue
        if not N.tree:
            open_.pop()
            continue
        C = N.tree.popleft()
        if C.depth < n:
            i = N.order[C.depth]
            here = N.Q[i]
            cands = [here, *nbrs[here]]
            rng.shuffle(cands)
            for v in cands:
                N.tree.append(_Constraint(C.who + (i,), C.where + (v,)))
        nodes += 1
        Q_new = planner.generate(N.Q, N.order, C.who, C.where)
        if Q_new is None:
            continue
        known = explored.get(Q_new)
        if known is not None:
            N.neighbors[known] = _edge_cost(N.Q, Q_new, goals)
            if rewire(N):
                consider()
            target = root if rng.random() < restart_rate else known
            if goal_node is None or target.f < goal_node.f:
                open_.append(target)
        else:
            cost = _edge_cost(N.Q, Q_new, goals)
            new = _Node(Q_new, N, planner.order(Q_new), N.g + cost, heuristic(Q_new))
            N.neighbors[new] = cost
            explored[Q_new] = new
            open_.append(new)

    if best is not None:
        return outcome(Status.SOLVED, best, nodes)
    if not open_:
        return outcome(Status.UNSOLVABLE, None, nodes)
    return outcome(Status.TIMEOUT, None, nodes)

