"""Grid world, synchronous joint transitions, conflicts and solution costs.

Cells are ``(row, col)`` tuples. Internally most routines work on flat
indices ``row * width + col`` for speed.
"""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArityMismatch, MapFormatError, NonRectangular, UnknownGlyph

Cell = tuple[int, int]

FREE_GLYPHS = frozenset(".")
BLOCKED_GLYPHS = frozenset("@T")


class Action(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4

    @property
    def delta(self) -> Cell:
        return DELTAS[self]


DELTAS: tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
ACTIONS = tuple(Action)
N_ACTIONS = len(ACTIONS)
_DR = np.array([d[0] for d in DELTAS], dtype=np.int64)
_DC = np.array([d[1] for d in DELTAS], dtype=np.int64)


def action_between(a: Cell, b: Cell) -> Action:
    """The action moving ``a`` to ``b``; raises ValueError if not adjacent."""
    d = (b[0] - a[0], b[1] - a[1])
    try:
        return Action(DELTAS.index(d))
    except ValueError:
        raise ValueError(f"{a} -> {b} is not a single grid move") from None


@dataclass(frozen=True, eq=False)
class GridMap:
    width: int
    height: int
    blocked: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise MapFormatError("map must be at least 1x1")
        arr = np.asarray(self.blocked, dtype=bool)
        if arr.size != self.width * self.height:
            raise MapFormatError(
                f"blocked has {arr.size} entries, expected {self.width * self.height}"
            )
        arr = arr.reshape(self.height, self.width).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "blocked", arr)

    @classmethod
    def empty(cls, height: int, width: int) -> "GridMap":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @classmethod
    def from_array(cls, blocked) -> "GridMap":
        arr = np.asarray(blocked, dtype=bool)
        return cls(arr.shape[1], arr.shape[0], arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def size(self) -> int:
        return self.width * self.height

    @cached_property
    def content_hash(self) -> str:
        h = hashlib.sha1(f"{self.height}x{self.width}:".encode())
        h.update(np.packbits(self.blocked).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.blocked, other.blocked))

    def __hash__(self):
        return hash(self.content_hash)

    def __repr__(self):
        return f"GridMap({self.height}x{self.width}, blocked={int(self.blocked.sum())})"

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.blocked[cell]

    def index(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, idx: int) -> Cell:
        return divmod(int(idx), self.width)

    def free_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(~self.blocked)
        return list(zip(rows.tolist(), cols.tolist()))

    @cached_property
    def free_flat(self) -> np.ndarray:
        f = ~self.blocked.ravel()
        f.flags.writeable = False
        return f

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """Free 4-neighbours of every flat index, in Up, Down, Left, Right order."""
        H, W = self.height, self.width
        free = self.free_flat
        out = []
        for idx in range(H * W):
            if not free[idx]:
                out.append(())
                continue
            r, c = divmod(idx, W)
            nb = []
            for dr, dc in DELTAS[:4]:
                rr, cc = r + dr, c + dc
                if 0 <= rr < H and 0 <= cc < W and free[rr * W + cc]:
                    nb.append(rr * W + cc)
            out.append(tuple(nb))
        return tuple(out)

    def to_text(self) -> str:
        rows = ("".join("@" if b else "." for b in row) for row in self.blocked)
        return "\n".join(rows) + "\n"


def parse_map(text: str) -> GridMap:
    """Parse an ASCII grid: '.' free, '@' or 'T' blocked.

    A MovingAI header (``type``/``height``/``width``/``map`` lines) is skipped
    when present.
    """
    lines = text.splitlines()
    if lines and lines[0].startswith("type "):
        try:
            start = next(i for i, ln in enumerate(lines) if ln.strip() == "map") + 1
        except StopIteration:
            raise MapFormatError("MovingAI header without 'map' line") from None
        lines = lines[start:]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MapFormatError("empty map text")
    width = len(lines[0])
    if width == 0:
        raise MapFormatError("empty first row")
    blocked = np.zeros((len(lines), width), dtype=bool)
    for r, line in enumerate(lines):
        if len(line) != width:
            raise NonRectangular(f"row {r} has width {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch in BLOCKED_GLYPHS:
                blocked[r, c] = True
            elif ch not in FREE_GLYPHS:
                raise UnknownGlyph(f"unknown glyph {ch!r} at ({r},{c})")
    return GridMap.from_array(blocked)


def load_map(path) -> GridMap:
    return parse_map(Path(path).read_text())


def save_map(grid: GridMap, path) -> None:
    Path(path).write_text(grid.to_text())


@dataclass(frozen=True)
class MAPFInstance:
    map: GridMap
    starts: tuple[Cell, ...]
    goals: tuple[Cell, ...]
    seed: int = 0

    def __post_init__(self):
        starts = tuple((int(r), int(c)) for r, c in self.starts)
        goals = tuple((int(r), int(c)) for r, c in self.goals)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "goals", goals)
        if len(starts) != len(goals) or not starts:
            raise ValueError("need one start and one goal per agent, n >= 1")
        if len(set(starts)) != len(starts):
            raise ValueError("start cells must be distinct")
        for c in starts + goals:
            if not self.map.is_free(c):
                raise ValueError(f"cell {c} is not a free cell")

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    def with_starts(self, starts: Sequence[Cell]) -> "MAPFInstance":
        """Suffix instance: same map and goals, new start configuration."""
        return MAPFInstance(self.map, tuple(starts), self.goals, self.seed)


@dataclass(frozen=True)
class JointState:
    positions: tuple[Cell, ...]
    timestep: int = 0


@dataclass
class ConflictReport:
    vertex: list[tuple[Cell, tuple[int, ...]]] = field(default_factory=list)
    edge: list[tuple[int, int]] = field(default_factory=list)
    obstacle: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.vertex or self.edge or self.obstacle)

    def __len__(self):
        return len(self.vertex) + len(self.edge) + len(self.obstacle)


def _targets(grid: GridMap, pos: np.ndarray, acts: np.ndarray):
    """Flat target indices and a mask of moves leaving the map or hitting obstacles."""
    W = grid.width
    r = pos // W + _DR[acts]
    c = pos % W + _DC[acts]
    oob = (r < 0) | (r >= grid.height) | (c < 0) | (c >= W)
    tgt = np.where(oob, pos, r * W + c)
    bad = oob | grid.blocked.ravel()[tgt]
    return tgt, bad


def _conflict_masks(grid: GridMap, pos: np.ndarray, tgt: np.ndarray):
    """Per-agent vertex/edge conflict masks for a proposed flat transition."""
    n = len(pos)
    counts = np.bincount(tgt, minlength=grid.size)
    vertex = counts[tgt] > 1
    occ = np.full(grid.size, -1, dtype=np.int64)
    occ[pos] = np.arange(n)
    j = occ[tgt]
    moving = tgt != pos
    safe_j = np.where(j >= 0, j, 0)
    edge = moving & (j >= 0) & (j != np.arange(n)) & (tgt[safe_j] == pos)
    return vertex, edge


def resolve_moves(grid: GridMap, pos: np.ndarray, acts: np.ndarray) -> np.ndarray:
    """Execution-mode transition on flat indices.

    Every agent whose move hits an obstacle or takes part in a vertex or edge
    conflict is turned into Wait; repeated until no conflict remains.
    Returns the new flat positions.
    """
    tgt, bad = _targets(grid, pos, acts)
    tgt = np.where(bad, pos, tgt)
    while True:
        vertex, edge = _conflict_masks(grid, pos, tgt)
        revert = (vertex | edge) & (tgt != pos)
        if not revert.any():
            return tgt
        tgt = np.where(revert, pos, tgt)


def _as_arrays(grid: GridMap, state: JointState, actions: Sequence[int]):
    if len(actions) != len(state.positions):
        raise ArityMismatch(f"{len(actions)} actions for {len(state.positions)} agents")
    pos = np.fromiter(
        (r * grid.width + c for r, c in state.positions), dtype=np.int64, count=len(actions)
    )
    acts = np.asarray([int(a) for a in actions], dtype=np.int64)
    return pos, acts


def _to_cells(grid: GridMap, flat: np.ndarray) -> tuple[Cell, ...]:
    rows, cols = np.divmod(flat, grid.width)
    return tuple(zip(rows.tolist(), cols.tolist()))


def step(grid: GridMap, state: JointState, actions: Sequence[int], execute: bool = False):
    """Apply a joint action.

    Raw mode (``execute=False``) moves every agent whose move stays on a free
    cell and reports all vertex conflicts, edge (swap) conflicts and obstacle
    violations; agents hitting an obstacle stay in place. Execution mode
    returns a conflict-free state (see :func:`resolve_moves`) and an empty
    report.
    """
    pos, acts = _as_arrays(grid, state, actions)
    if execute:
        new = resolve_moves(grid, pos, acts)
        return JointState(_to_cells(grid, new), state.timestep + 1), ConflictReport()
    tgt, bad = _targets(grid, pos, acts)
    report = ConflictReport(obstacle=np.nonzero(bad)[0].tolist())
    tgt = np.where(bad, pos, tgt)
    report.vertex, report.edge = find_conflicts(grid, pos, tgt)
    return JointState(_to_cells(grid, tgt), state.timestep + 1), report


def find_conflicts(grid: GridMap, pos: np.ndarray, tgt: np.ndarray):
    """Lists of vertex conflicts ``(cell, agents)`` and edge conflicts ``(i, j)`` with i < j."""
    vertex_mask, edge_mask = _conflict_masks(grid, pos, tgt)
    vertex = []
    if vertex_mask.any():
        groups: dict[int, list[int]] = {}
        for i in np.nonzero(vertex_mask)[0].tolist():
            groups.setdefault(int(tgt[i]), []).append(i)
        vertex = [(grid.cell(v), tuple(a)) for v, a in sorted(groups.items())]
    edge = []
    if edge_mask.any():
        occ = {int(p): i for i, p in enumerate(pos.tolist())}
        for i in np.nonzero(edge_mask)[0].tolist():
            j = occ[int(tgt[i])]
            if i < j:
                edge.append((i, j))
    return vertex, edge


# ---------------------------------------------------------------- solutions


@dataclass(frozen=True)
class Solution:
    plans: tuple[tuple[Cell, ...], ...]
    costs: tuple[int, ...]
    soc: int
    makespan: int

    @property
    def n_steps(self) -> int:
        return len(self.plans[0]) - 1

    def config(self, t: int) -> tuple[Cell, ...]:
        t = min(t, self.n_steps)
        return tuple(p[t] for p in self.plans)

    def actions(self, t: int) -> list[Action]:
        return [action_between(p[t], p[t + 1]) for p in self.plans]


def pad_plans(plans: Iterable[Sequence[Cell]]) -> tuple[tuple[Cell, ...], ...]:
    plans = [tuple(tuple(c) for c in p) for p in plans]
    T = max(len(p) for p in plans)
    return tuple(p + (p[-1],) * (T - len(p)) for p in plans)


def agent_cost(plan: Sequence[Cell], goal: Cell) -> int:
    """First timestep after which the agent sits on its goal for good.

    An agent that does not end on its goal costs the full plan length.
    """
    T = len(plan) - 1
    if tuple(plan[-1]) != tuple(goal):
        return T
    t = T
    while t > 0 and tuple(plan[t - 1]) == tuple(goal):
        t -= 1
    return t


def solution_costs(instance: MAPFInstance, plans) -> Solution:
    plans = pad_plans(plans)
    costs = tuple(agent_cost(p, g) for p, g in zip(plans, instance.goals))
    return Solution(plans, costs, sum(costs), max(costs))


@dataclass(frozen=True)
class Violation:
    kind: str  # LengthMismatch, WrongStart, WrongGoal, IllegalMove, ObstacleCell, VertexConflict, EdgeConflict
    t: int = -1
    agents: tuple[int, ...] = ()
    cell: Cell | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_solution(instance: MAPFInstance, sol) -> ValidationReport:
    """Check start/goal agreement, move legality and conflicts at every step."""
    plans = sol.plans if isinstance(sol, Solution) else sol
    rep = ValidationReport()
    bad = rep.violations
    n = instance.n_agents
    if len(plans) != n or not plans or any(len(p) == 0 for p in plans):
        bad.append(Violation("LengthMismatch"))
        return rep
    lengths = {len(p) for p in plans}
    if len(lengths) != 1:
        bad.append(Violation("LengthMismatch"))
        return rep
    T = lengths.pop() - 1
    grid = instance.map
    for i, p in enumerate(plans):
        if tuple(p[0]) != instance.starts[i]:
            bad.append(Violation("WrongStart", 0, (i,), tuple(p[0])))
        if tuple(p[-1]) != instance.goals[i]:
            bad.append(Violation("WrongGoal", T, (i,), tuple(p[-1])))
        for t, c in enumerate(p):
            if not grid.is_free(tuple(c)):
                bad.append(Violation("ObstacleCell", t, (i,), tuple(c)))
        for t in range(T):
            a, b = p[t], p[t + 1]
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) > 1:
                bad.append(Violation("IllegalMove", t + 1, (i,), tuple(b)))
    for t in range(T + 1):
        seen: dict[Cell, int] = {}
        for i in range(n):
            c = tuple(plans[i][t])
            if c in seen:
                bad.append(Violation("VertexConflict", t, (seen[c], i), c))
            else:
                seen[c] = i
        if t == T:
            break
        prev = {tuple(plans[i][t]): i for i in range(n)}
        for i in range(n):
            a, b = tuple(plans[i][t]), tuple(plans[i][t + 1])
            j = prev.get(b)
            if j is not None and j > i and a != b and tuple(plans[j][t + 1]) == a:
                bad.append(Violation("EdgeConflict", t + 1, (i, j), b))
    return rep


# ---------------------------------------------------------------- instance files


def save_instance(instance: MAPFInstance, path, map_path=None) -> None:
    """Text instance file: header lines then one ``sx sy gx gy`` line per agent (x = column).

    A relative ``map_path`` is taken relative to the instance file's directory;
    without one the map is written next to the instance.
    """
    path = Path(path)
    if map_path is None:
        map_path = path.with_suffix(".map")
        save_map(instance.map, map_path)
    rel = os.path.relpath(path.parent / map_path, path.parent)
    lines = [f"map {rel}", f"agents {instance.n_agents}", f"seed {instance.seed}"]
    for (sr, sc), (gr, gc) in zip(instance.starts, instance.goals):
        lines.append(f"{sc} {sr} {gc} {gr}")
    path.write_text("\n".join(lines) + "\n")


def load_instance(path) -> MAPFInstance:
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    header = {}
    for ln in lines[:3]:
        key, _, value = ln.partition(" ")
        header[key] = value.strip()
    if set(header) != {"map", "agents", "seed"}:
        raise MapFormatError(f"bad instance header in {path}")
    n = int(header["agents"])
    rows = lines[3:]
    if len(rows) != n:
        raise MapFormatError(f"expected {n} agent lines, got {len(rows)}")
    starts, goals = [], []
    for ln in rows:
        sx, sy, gx, gy = (int(v) for v in ln.split())
        starts.append((sy, sx))
        goals.append((gy, gx))
    grid = load_map(path.parent / header["map"])
    return MAPFInstance(grid, tuple(starts), tuple(goals), int(header["seed"]))
