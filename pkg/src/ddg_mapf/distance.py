"""Cost-to-go fields: breadth-first distances to a goal over free cells."""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import GoalBlocked
from .grid import Cell, GridMap

# Dedicated sentinel; never used in arithmetic.
UNREACHABLE = int(np.iinfo(np.int32).max)

Window = tuple[int, int, int, int]  # r0, c0, r1, c1 (half-open)


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Distances to ``goal``; ``values`` covers the window starting at ``origin``.

    Cells outside the window read as UNREACHABLE. A full-map field has origin
    (0, 0) and the map's shape.
    """

    goal: Cell
    values: np.ndarray
    origin: tuple[int, int] = (0, 0)

    def value(self, cell: Cell) -> int:
        r = cell[0] - self.origin[0]
        c = cell[1] - self.origin[1]
        h, w = self.values.shape
        if 0 <= r < h and 0 <= c < w:
            return int(self.values[r, c])
        return UNREACHABLE

    def __getitem__(self, cell: Cell) -> int:
        return self.value(cell)

    def full(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.full(shape, UNREACHABLE, dtype=np.int32)
        r0, c0 = self.origin
        h, w = self.values.shape
        out[r0 : r0 + h, c0 : c0 + w] = self.values
        return out

    def window(self, r0: int, c0: int, h: int, w: int) -> np.ndarray:
        """Values on the rectangle at (r0, c0) of size h x w, UNREACHABLE outside."""
        out = np.full((h, w), UNREACHABLE, dtype=np.int32)
        fr0, fc0 = self.origin
        fh, fw = self.values.shape
        a0, a1 = max(r0, fr0), min(r0 + h, fr0 + fh)
        b0, b1 = max(c0, fc0), min(c0 + w, fc0 + fw)
        if a0 < a1 and b0 < b1:
            out[a0 - r0 : a1 - r0, b0 - c0 : b1 - c0] = self.values[
                a0 - fr0 : a1 - fr0, b0 - fc0 : b1 - fc0
            ]
        return out

    @cached_property
    def flat(self) -> list[int]:
        """Row-major python list over the window (fast scalar lookups in solvers)."""
        return self.values.ravel().tolist()


def compute_field(grid: GridMap, goal: Cell, window: Window | None = None) -> DistanceField:
    """Exact 4-connected shortest-path lengths to ``goal``.

    With ``window`` the search is confined to that rectangle (paths may not
    leave it), which keeps fields small on very large maps.
    """
    goal = (int(goal[0]), int(goal[1]))
    if not grid.is_free(goal):
        raise GoalBlocked(f"goal {goal} is not a free cell")
    if window is None:
        r0, c0, r1, c1 = 0, 0, grid.height, grid.width
    else:
        r0, c0, r1, c1 = window
        r0, c0 = max(0, r0), max(0, c0)
        r1, c1 = min(grid.height, r1), min(grid.width, c1)
        if not (r0 <= goal[0] < r1 and c0 <= goal[1] < c1):
            raise ValueError("window must contain the goal")
    h, w = r1 - r0, c1 - c0
    free = (~grid.blocked[r0:r1, c0:c1]).ravel().tolist()
    dist = [UNREACHABLE] * (h * w)
    g = (goal[0] - r0) * w + (goal[1] - c0)
    dist[g] = 0
    queue = deque([g])
    pop, push = queue.popleft, queue.append
    while queue:
        v = pop()
        d = dist[v] + 1
        c = v % w
        if v >= w:
            u = v - w
            if free[u] and dist[u] == UNREACHABLE:
                dist[u] = d
                push(u)
        u = v + w
        if u < h * w and free[u] and dist[u] == UNREACHABLE:
            dist[u] = d
            push(u)
        if c > 0:
            u = v - 1
            if free[u] and dist[u] == UNREACHABLE:
                dist[u] = d
                push(u)
        if c < w - 1:
            u = v + 1
            if free[u] and dist[u] == UNREACHABLE:
                dist[u] = d
                push(u)
    values = np.array(dist, dtype=np.int32).reshape(h, w)
    values.flags.writeable = False
    return DistanceField(goal, values, (r0, c0))


class FieldCache:
    """Memoised fields keyed by (map content hash, goal, window).

    Readers need no lock; insertions of distinct keys are serialised so each
    key is computed at most once.
    """

    def __init__(self):
        self._fields: dict = {}
        self._lock = threading.Lock()
        self.computed = 0

    def __len__(self):
        return len(self._fields)

    def get(self, grid: GridMap, goal: Cell, window: Window | None = None) -> DistanceField:
        key = (grid.content_hash, (int(goal[0]), int(goal[1])), window)
        f = self._fields.get(key)
        if f is not None:
            return f
        with self._lock:
            f = self._fields.get(key)
            if f is None:
                f = compute_field(grid, goal, window)
                self._fields[key] = f
                self.computed += 1
        return f

    def get_many(self, grid: GridMap, goals: Iterable[Cell]) -> list[DistanceField]:
        return [self.get(grid, g) for g in goals]

    def clear(self):
        with self._lock:
            self._fields.clear()


_default_cache = FieldCache()


def field_cache(grid: GridMap, goals: Iterable[Cell], cache: FieldCache | None = None):
    """Fields for every goal, computing each distinct (map, goal) at most once."""
    cache = _default_cache if cache is None else cache
    return cache.get_many(grid, goals)


def default_cache() -> FieldCache:
    return _default_cache
