"""Exhaustive joint-space A* minimising sum-of-costs (test oracle, tiny instances only).

States are ``(configuration, finished mask)``. A finished agent sits on its
goal for good; every step costs the number of unfinished agents and finishing
is a zero-cost move available at the goal. The optimum therefore equals the
optimal sum of "arrive and never leave" times.
"""

from __future__ import annotations

import heapq
import itertools
import time

from ..distance import UNREACHABLE, compute_field
from ..errors import InstanceTooLarge
from ..grid import MAPFInstance, solution_costs
from .lacam import SolveOutcome, Status

MAX_AGENTS = 4
MAX_SIDE = 6


def joint_astar(instance: MAPFInstance, horizon: int = 64) -> SolveOutcome:
    t0 = time.perf_counter()
    grid = instance.map
    n = instance.n_agents
    if n > MAX_AGENTS or grid.width > MAX_SIDE or grid.height > MAX_SIDE:
        raise InstanceTooLarge(f"joint A* is limited to {MAX_AGENTS} agents on {MAX_SIDE}x{MAX_SIDE}")
    W = grid.width
    goals = tuple(r * W + c for r, c in instance.goals)
    starts = tuple(r * W + c for r, c in instance.starts)
    dist = [compute_field(grid, g).flat for g in instance.goals]
    nbrs = grid.neighbors
    full = (1 << n) - 1

    def done(expanded):
        return SolveOutcome(Status.UNSOLVABLE, None, expanded, (time.perf_counter() - t0) * 1e3)

    if len(set(goals)) != n or any(dist[i][starts[i]] == UNREACHABLE for i in range(n)):
        return done(0)

    def h(Q, F):
        return sum(dist[i][Q[i]] for i in range(n) if not F >> i & 1)

    start = (starts, 0)
    best_g = {start: 0}
    parent = {start: None}
    depth = {start: 0}
    tie = itertools.count()
    heap = [(h(starts, 0), 0, next(tie), start)]
    expanded = 0
    while heap:
        f, g, _, s = heapq.heappop(heap)
        if g > best_g[s]:
            continue
        Q, F = s
        if F == full:
            path = [Q]
            while parent[s] is not None:
                s, dt = parent[s]
                if dt:
                    path.append(s[0])
            path.reverse()
            plans = [[grid.cell(c[i]) for c in path] for i in range(n)]
            sol = solution_costs(instance, plans)
            return SolveOutcome(Status.SOLVED, sol, expanded, (time.perf_counter() - t0) * 1e3)
        expanded += 1
        succ = []
        # zero-cost finishing moves
        for i in range(n):
            if not F >> i & 1 and Q[i] == goals[i]:
                succ.append(((Q, F | 1 << i), 0, 0))
        if depth[s] < horizon:
            unfinished = n - bin(F).count("1")
            options = [
                (Q[i],) if F >> i & 1 else (Q[i], *nbrs[Q[i]]) for i in range(n)
            ]
            for Q2 in itertools.product(*options):
                if len(set(Q2)) < n:
                    continue
                if any(Q2[i] == Q[j] and Q2[j] == Q[i]
                       for i in range(n) for j in range(i + 1, n) if Q[i] != Q2[i]):
                    continue
                succ.append(((Q2, F), unfinished, 1))
        for s2, cost, dt in succ:
            g2 = g + cost
            if g2 < best_g.get(s2, UNREACHABLE):
                best_g[s2] = g2
                parent[s2] = (s, dt)
                depth[s2] = depth[s] + dt
                heapq.heappush(heap, (g2 + h(*s2), g2, next(tie), s2))
    return done(expanded)
