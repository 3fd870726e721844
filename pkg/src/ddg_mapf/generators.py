"""Map and instance generators: random, maze, warehouse, city tiles and empty maps.

All generators are driven by a numpy ``Generator`` so a seed fixes the result.
Random and maze maps are 17 to 21 cells per side by default.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np

from .errors import GenerationFailed
from .grid import Cell, GridMap, MAPFInstance

MAP_KINDS = ("random", "maze", "warehouse", "city", "empty")
RANDOM_DENSITY = (0.05, 0.30)
MAX_RETRIES = 20


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def largest_component(blocked: np.ndarray) -> np.ndarray:
    """Boolean mask of the largest 4-connected free region."""
    H, W = blocked.shape
    label = np.full((H, W), -1, dtype=np.int64)
    best, best_size, cur = -1, 0, 0
    for r0, c0 in zip(*np.nonzero(~blocked)):
        if label[r0, c0] >= 0:
            continue
        size = 0
        q = deque([(r0, c0)])
        label[r0, c0] = cur
        while q:
            r, c = q.popleft()
            size += 1
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < H and 0 <= cc < W and not blocked[rr, cc] and label[rr, cc] < 0:
                    label[rr, cc] = cur
                    q.append((rr, cc))
        if size > best_size:
            best, best_size = cur, size
        cur += 1
    return label == best


def random_map(rng, side: int | None = None, density: float | None = None) -> GridMap:
    rng = _rng(rng)
    side = int(rng.integers(17, 22)) if side is None else side
    density = float(rng.uniform(*RANDOM_DENSITY)) if density is None else density
    return GridMap.from_array(rng.random((side, side)) < density)


# Instance-level default: perfect mazes are trees, and with more than a few
# agents most of their instances have no joint solution.
MAZE_LOOPS = 0.3


def maze_map(rng, side: int | None = None, loops: float = 0.0) -> GridMap:
    """Perfect maze by randomized depth-first carving.

    Rooms sit on even coordinates and corridors between them are carved along
    a random spanning tree; ``loops`` is the chance of knocking out each
    remaining wall between two rooms, which adds cycles.
    """
    rng = _rng(rng)
    if side is None:
        side = int(rng.choice([17, 19, 21]))
    blocked = np.ones((side, side), dtype=bool)
    rows = (side + 1) // 2
    cols = (side + 1) // 2
    seen = np.zeros((rows, cols), dtype=bool)
    stack = [(int(rng.integers(rows)), int(rng.integers(cols)))]
    seen[stack[0]] = True
    blocked[2 * stack[0][0], 2 * stack[0][1]] = False
    while stack:
        r, c = stack[-1]
        opts = [(r + dr, c + dc) for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                if 0 <= r + dr < rows and 0 <= c + dc < cols and not seen[r + dr, c + dc]]
        if not opts:
            stack.pop()
            continue
        nr, nc = opts[int(rng.integers(len(opts)))]
        seen[nr, nc] = True
        blocked[2 * nr, 2 * nc] = False
        blocked[r + nr, c + nc] = False  # wall cell between the two rooms
        stack.append((nr, nc))
    if loops > 0:
        for r in range(side):
            for c in range(side):
                between = (r % 2) != (c % 2)
                if between and blocked[r, c] and rng.random() < loops:
                    blocked[r, c] = False
    return GridMap.from_array(blocked)


def warehouse_map(height: int = 33, width: int = 46, zone: int = 3) -> tuple[GridMap, np.ndarray, np.ndarray]:
    """Shelf layout plus masks of allowed start and goal cells.

    Starts live in the free zones along the left and right edges; goals are
    aisle cells directly above or below a shelf.
    """
    blocked = np.zeros((height, width), dtype=bool)
    for r in range(2, height - 2, 4):
        for c0 in range(zone + 1, width - zone - 1, 9):
            c1 = min(c0 + 8, width - zone - 1)
            blocked[r : r + 2, c0:c1] = True
    grid = GridMap.from_array(blocked)
    free = ~blocked
    starts = np.zeros_like(free)
    starts[:, :zone] = True
    starts[:, width - zone :] = True
    starts &= free
    near = np.zeros_like(free)
    near[:-1] |= blocked[1:]
    near[1:] |= blocked[:-1]
    goals = near & free
    goals[:, :zone] = False
    goals[:, width - zone :] = False
    return grid, starts, goals


def city_map(rng, side: int = 64, block: int = 8, street: int = 2) -> GridMap:
    """City-tile-like map: street grid with randomly filled building lots."""
    rng = _rng(rng)
    blocked = np.zeros((side, side), dtype=bool)
    for r0 in range(street, side, block + street):
        for c0 in range(street, side, block + street):
            r1, c1 = min(r0 + block, side), min(c0 + block, side)
            lot = rng.random() < 0.7
            if not lot:
                continue
            h = int(rng.integers(2, r1 - r0 + 1)) if r1 - r0 >= 2 else r1 - r0
            w = int(rng.integers(2, c1 - c0 + 1)) if c1 - c0 >= 2 else c1 - c0
            rr = r0 + int(rng.integers(0, r1 - r0 - h + 1))
            cc = c0 + int(rng.integers(0, c1 - c0 - w + 1))
            blocked[rr : rr + h, cc : cc + w] = True
    blocked |= ~largest_component(blocked)
    return GridMap.from_array(blocked)


def place_agents(rng, region: np.ndarray, n: int, goal_region: np.ndarray | None = None
                 ) -> tuple[list[Cell], list[Cell]]:
    """Distinct starts and distinct goals, every goal different from its own start."""
    rng = _rng(rng)
    goal_region = region if goal_region is None else goal_region
    s_cells = np.argwhere(region)
    g_cells = np.argwhere(goal_region)
    if len(s_cells) < n or len(g_cells) < n or (n == 1 and len(s_cells) + len(g_cells) < 3):
        raise GenerationFailed(f"not enough free cells for {n} agents")
    starts = [tuple(map(int, s_cells[i])) for i in rng.choice(len(s_cells), n, replace=False)]
    for _ in range(MAX_RETRIES):
        goals = [tuple(map(int, g_cells[i])) for i in rng.choice(len(g_cells), n, replace=False)]
        if all(s != g for s, g in zip(starts, goals)):
            return starts, goals
    raise GenerationFailed("could not separate starts from goals")


def generate_instance(kind: str, n: int, rng, side: int | None = None,
                      maze_loops: float = MAZE_LOOPS) -> MAPFInstance:
    """A solvable-by-connectivity instance of the given map kind.

    ``rng`` may be an int seed, recorded as the instance seed, or a Generator
    (the seed is then drawn from it).
    """
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(2**32))
    else:
        seed = int(rng)
    gen = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        goal_region = None
        if kind == "random":
            grid = random_map(gen, side)
        elif kind == "maze":
            grid = maze_map(gen, side, maze_loops)
        elif kind == "warehouse":
            grid, region, goal_region = warehouse_map()
        elif kind == "city":
            grid = city_map(gen, side or 64)
        elif kind == "empty":
            s = side or 20
            grid = GridMap.empty(s, s)
        else:
            raise ValueError(f"unknown map kind {kind!r}")
        comp = largest_component(grid.blocked)
        if kind == "warehouse":
            region = region & comp
            goal_region = goal_region & comp
        else:
            region = comp
        try:
            starts, goals = place_agents(gen, region, n, goal_region)
        except GenerationFailed:
            continue
        return MAPFInstance(grid, tuple(starts), tuple(goals), seed)
    raise GenerationFailed(f"{kind} instance with {n} agents after {MAX_RETRIES} tries")


def sample_kind(rng: np.random.Generator, maze_fraction: float) -> str:
    return "maze" if rng.random() < maze_fraction else "random"


def bounded_pairs(rng, side: int, n: int, cap: int) -> tuple[list[Cell], list[Cell]]:
    """Random start/goal pairs on an empty square map with Manhattan distance in [1, cap]."""
    rng = _rng(rng)
    starts_flat = rng.choice(side * side, n, replace=False)
    used: set[int] = set()
    starts, goals = [], []
    for s in starts_flat.tolist():
        r, c = divmod(s, side)
        for _ in range(1000):
            dr = int(rng.integers(-cap, cap + 1))
            rest = cap - abs(dr)
            dc = int(rng.integers(-rest, rest + 1))
            gr, gc = r + dr, c + dc
            if (dr or dc) and 0 <= gr < side and 0 <= gc < side and gr * side + gc not in used:
                break
        else:
            raise GenerationFailed("could not place a goal")
        used.add(gr * side + gc)
        starts.append((r, c))
        goals.append((gr, gc))
    return starts, goals


def connected(grid: GridMap, cells: Sequence[Cell]) -> bool:
    comp = largest_component(grid.blocked)
    return all(comp[c] for c in cells)
