"""Priority inheritance one-step planner (PIBT) on flat cell indices."""

from __future__ import annotations

import random
from typing import Sequence

from ..distance import UNREACHABLE, DistanceField
from ..grid import Action, Cell, GridMap, JointState, action_between


def distance_order(dists: Sequence[int], n: int) -> list[int]:
    """Agents by cost-to-go descending, index ascending on ties."""
    return sorted(range(n), key=lambda i: (-dists[i], i))


class PIBT:
    """Configuration generator shared by :func:`pibt_step` and the LaCAM search.

    ``dist[i]`` is a flat row-major list of agent i's cost-to-go.
    """

    def __init__(self, grid: GridMap, goals: Sequence[int], dist: Sequence[Sequence[int]],
                 rng: random.Random | None = None):
        self.grid = grid
        self.nbrs = grid.neighbors
        self.goals = list(goals)
        self.dist = dist
        self.n = len(goals)
        self.rng = rng

    def order(self, Q: Sequence[int]) -> list[int]:
        return distance_order([self.dist[i][Q[i]] for i in range(self.n)], self.n)

    def generate(self, Q_from: Sequence[int], order: Sequence[int],
                 who: Sequence[int] = (), where: Sequence[int] = ()) -> tuple[int, ...] | None:
        """One conflict-free successor of ``Q_from`` honouring the fixed moves, or None."""
        n = self.n
        Q_to: list[int | None] = [None] * n
        occ_now = {v: i for i, v in enumerate(Q_from)}
        occ_next: dict[int, int] = {}
        for i, v in zip(who, where):
            if v in occ_next:
                return None
            j = occ_now.get(v)
            if j is not None and j != i and Q_to[j] == Q_from[i]:
                return None
            Q_to[i] = v
            occ_next[v] = i
        # a fixed move into the cell of an agent with a fixed move back is a swap
        for i, v in zip(who, where):
            j = occ_now.get(v)
            if j is not None and j != i and Q_to[j] == Q_from[i]:
                return None

        dist, nbrs, rng = self.dist, self.nbrs, self.rng

        def func(i: int) -> bool:
            here = Q_from[i]
            cands = [here, *nbrs[here]]
            d = dist[i]
            if rng is None:
                cands.sort(key=lambda v: d[v])
            else:
                tie = {v: rng.random() for v in cands}
                cands.sort(key=lambda v: (d[v], tie[v]))
            for u in cands:
                if d[u] == UNREACHABLE and u != here:
                    continue
                if u in occ_next:
                    continue
                k = occ_now.get(u)
                if k is not None and Q_to[k] == here:
                    continue
                occ_next[u] = i
                Q_to[i] = u
                if k is not None and k != i and Q_to[k] is None and not func(k):
                    continue
                return True
            occ_next[here] = i
            Q_to[i] = here
            return False

        for i in order:
            if Q_to[i] is None and not func(i):
                return None
        if len(occ_next) != n or len(set(Q_to)) != n:
            return None
        return tuple(Q_to)  # type: ignore[arg-type]


def pibt_step(grid: GridMap, state: JointState, goals: Sequence[Cell],
              fields: Sequence[DistanceField], priorities: Sequence[float] | None = None,
              rng: random.Random | None = None) -> list[Action]:
    """Conflict-free joint action from one PIBT step.

    ``priorities`` (higher moves first) defaults to cost-to-go descending with
    index tie-break.
    """
    W = grid.width
    Q = [r * W + c for r, c in state.positions]
    dist = [f.full(grid.shape).ravel().tolist() if f.values.shape != grid.shape else f.flat
            for f in fields]
    planner = PIBT(grid, [r * W + c for r, c in goals], dist, rng)
    if priorities is None:
        order = planner.order(Q)
    else:
        order = sorted(range(len(Q)), key=lambda i: (-priorities[i], i))
    Q_to = planner.generate(Q, order)
    if Q_to is None:  # cannot happen without fixed moves; stay put
        return [Action.WAIT] * len(Q)
    return [action_between(grid.cell(a), grid.cell(b)) for a, b in zip(Q, Q_to)]
