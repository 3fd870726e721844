"""Egocentric observations and their fixed-length token encoding.

Layout of the 256-token sequence (positions are fixed up to the agents block)::

    0          SEP_FOV
    1..121     11x11 field of view, row-major, one token per cell
    122        SEP_SELF
    123..125   goal dy, goal dx, goal distance (numeric tokens)
    126        SEP_HISTORY
    127..130   own last 4 actions, oldest first (ACT_NONE before t=0)
    131        SEP_AGENTS
    then per nearby agent (at most 12), 9 tokens:
               SEP_AGENT, dy, dx, goal dy, goal dx, 4 actions
    then       SEP_END followed by PAD up to 256

A FOV cell token is OUT_OF_BOUNDS, OBSTACLE, or the cell's cost-to-go
relative to the observer's own (clamped to [-12, 12]) as NUM_v, or AGENT_v
when another agent stands there; UNREACHABLE / AGENT_UNREACHABLE mark free
cells with no path to the observer's goal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .distance import UNREACHABLE, DistanceField
from .errors import UnknownId
from .grid import Action, Cell, GridMap

FOV_RADIUS = 5
FOV_SIDE = 2 * FOV_RADIUS + 1
CLAMP = 12
MAX_NEARBY = 12
HISTORY = 4
CONTEXT = 256
REL_UNREACHABLE = 127  # marker inside Observation.rel_cost

_SEPARATORS = ["SEP_FOV", "SEP_SELF", "SEP_HISTORY", "SEP_AGENTS", "SEP_AGENT", "SEP_END"]
_ACTIONS = ["ACT_UP", "ACT_DOWN", "ACT_LEFT", "ACT_RIGHT", "ACT_WAIT", "ACT_NONE"]
_NUMS = [f"NUM_{v:+d}" for v in range(-CLAMP, CLAMP + 1)]
_GLYPHS = ["OBSTACLE", "OUT_OF_BOUNDS", "UNREACHABLE", "AGENT_UNREACHABLE"]
_AGENT_NUMS = [f"AGENT_{v:+d}" for v in range(-CLAMP, CLAMP + 1)]

GROUPS: dict[str, list[str]] = {
    "padding": ["PAD"],
    "separator": _SEPARATORS,
    "action": _ACTIONS,
    "numeric": _NUMS,
    "cell": _GLYPHS + _AGENT_NUMS,
}


class Vocabulary:
    def __init__(self):
        self.names: list[str] = [name for group in GROUPS.values() for name in group]
        self.group_of: list[str] = [g for g, names in GROUPS.items() for _ in names]
        self._ids = {name: i for i, name in enumerate(self.names)}
        assert len(self._ids) == len(self.names)

    def __len__(self):
        return len(self.names)

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, idx: int) -> str:
        if not 0 <= idx < len(self.names):
            raise UnknownId(f"token id {idx} outside [0, {len(self.names)})")
        return self.names[idx]

    def table(self) -> str:
        lines = ["id\tname\tgroup"]
        lines += [f"{i}\t{n}\t{g}" for i, (n, g) in enumerate(zip(self.names, self.group_of))]
        return "\n".join(lines) + "\n"


VOCAB = Vocabulary()
VOCAB_SIZE = len(VOCAB)

PAD = VOCAB.id("PAD")
SEP_FOV, SEP_SELF, SEP_HISTORY, SEP_AGENTS, SEP_AGENT, SEP_END = (VOCAB.id(s) for s in _SEPARATORS)
ACT_BASE = VOCAB.id("ACT_UP")
ACT_NONE = VOCAB.id("ACT_NONE")
NUM_ZERO = VOCAB.id("NUM_+0")
AGENT_ZERO = VOCAB.id("AGENT_+0")
OBSTACLE = VOCAB.id("OBSTACLE")
OUT_OF_BOUNDS = VOCAB.id("OUT_OF_BOUNDS")
UNREACHABLE_TOKEN = VOCAB.id("UNREACHABLE")
AGENT_UNREACHABLE = VOCAB.id("AGENT_UNREACHABLE")

POS_FOV = 1
POS_SELF = POS_FOV + FOV_SIDE * FOV_SIDE  # 122
POS_HISTORY = POS_SELF + 4  # 126
POS_AGENTS = POS_HISTORY + 1 + HISTORY  # 131
RECORD = 5 + HISTORY


def fov_position(dr: int, dc: int) -> int:
    """Token position of the FOV cell at offset (dr, dc) from the observer."""
    return POS_FOV + (dr + FOV_RADIUS) * FOV_SIDE + (dc + FOV_RADIUS)


@dataclass(frozen=True)
class NearbyAgent:
    offset: Cell
    goal_offset: Cell
    history: tuple[Action | None, ...]


@dataclass(frozen=True, eq=False)
class Observation:
    obstacle: np.ndarray  # (11, 11) bool
    agents: np.ndarray  # (11, 11) bool, other agents only
    rel_cost: np.ndarray  # (11, 11) int16, REL_UNREACHABLE marker
    oob: np.ndarray  # (11, 11) bool
    position: Cell
    goal_offset: Cell
    goal_distance: int
    nearby: tuple[NearbyAgent, ...]
    history: tuple[Action | None, ...]

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (all(np.array_equal(getattr(self, k), getattr(other, k))
                    for k in ("obstacle", "agents", "rel_cost", "oob"))
                and (self.position, self.goal_offset, self.goal_distance, self.nearby, self.history)
                == (other.position, other.goal_offset, other.goal_distance, other.nearby, other.history))


def _clamp(v: int, lo: int = -CLAMP, hi: int = CLAMP) -> int:
    return lo if v < lo else hi if v > hi else v


def _last(history: Sequence, k: int = HISTORY) -> tuple:
    tail = tuple(history[-k:]) if k else ()
    return (None,) * (k - len(tail)) + tuple(Action(a) for a in tail)


def build_observation(grid: GridMap, positions: Sequence[Cell], agent: int,
                      fields: Sequence[DistanceField], history: Sequence[Sequence[int]],
                      occupancy: Mapping[Cell, int] | None = None) -> Observation:
    """Observation of ``agent``; ``history[j]`` holds agent j's executed actions, newest last.

    ``occupancy`` (cell -> agent) may be passed to share one lookup across agents.
    """
    if occupancy is None:
        occupancy = {tuple(p): j for j, p in enumerate(positions)}
    r, c = positions[agent]
    R = FOV_RADIUS
    r0, c0 = r - R, c - R
    rows = np.arange(r0, r0 + FOV_SIDE)[:, None]
    cols = np.arange(c0, c0 + FOV_SIDE)[None, :]
    oob = (rows < 0) | (rows >= grid.height) | (cols < 0) | (cols >= grid.width)
    obstacle = np.zeros((FOV_SIDE, FOV_SIDE), dtype=bool)
    a0, a1 = max(r0, 0), min(r0 + FOV_SIDE, grid.height)
    b0, b1 = max(c0, 0), min(c0 + FOV_SIDE, grid.width)
    obstacle[a0 - r0 : a1 - r0, b0 - c0 : b1 - c0] = grid.blocked[a0:a1, b0:b1]

    field = fields[agent]
    own = field.value((r, c))
    win = field.window(r0, c0, FOV_SIDE, FOV_SIDE)
    if own == UNREACHABLE:
        rel = np.full((FOV_SIDE, FOV_SIDE), REL_UNREACHABLE, dtype=np.int16)
    else:
        reach = win != UNREACHABLE
        diff = np.clip(win.astype(np.int64) - own, -CLAMP, CLAMP)
        rel = np.where(reach, diff, REL_UNREACHABLE).astype(np.int16)

    agents = np.zeros((FOV_SIDE, FOV_SIDE), dtype=bool)
    near = []
    if len(occupancy) <= FOV_SIDE * FOV_SIDE:
        for cell, j in occupancy.items():
            dr, dc = cell[0] - r, cell[1] - c
            if j != agent and -R <= dr <= R and -R <= dc <= R:
                near.append((abs(dr) + abs(dc), j, dr, dc))
    else:
        for dr in range(-R, R + 1):
            for dc in range(-R, R + 1):
                j = occupancy.get((r + dr, c + dc))
                if j is not None and j != agent:
                    near.append((abs(dr) + abs(dc), j, dr, dc))
    near.sort()
    nearby = []
    for k, (_, j, dr, dc) in enumerate(near):
        agents[dr + R, dc + R] = True
        if k < MAX_NEARBY:
            g = fields[j].goal
            jr, jc = r + dr, c + dc
            nearby.append(NearbyAgent((dr, dc), (_clamp(g[0] - jr), _clamp(g[1] - jc)),
                                      _last(history[j])))
    goal = field.goal
    dist = CLAMP if own == UNREACHABLE else min(own, CLAMP)
    return Observation(
        obstacle=obstacle, agents=agents, rel_cost=rel, oob=oob,
        position=(r, c),
        goal_offset=(_clamp(goal[0] - r), _clamp(goal[1] - c)),
        goal_distance=dist,
        nearby=tuple(nearby),
        history=_last(history[agent]),
    )


def _act_token(a: Action | None) -> int:
    return ACT_NONE if a is None else ACT_BASE + int(a)


def tokenize(obs: Observation) -> np.ndarray:
    """Fixed 256-token encoding (uint8 ids in [0, 67))."""
    seq = np.full(CONTEXT, PAD, dtype=np.uint8)
    rel = obs.rel_cost.astype(np.int64)
    unreach = rel == REL_UNREACHABLE
    relc = np.where(unreach, 0, rel)
    free_tok = np.where(unreach, UNREACHABLE_TOKEN, NUM_ZERO + relc)
    agent_tok = np.where(unreach, AGENT_UNREACHABLE, AGENT_ZERO + relc)
    cell = np.where(obs.agents, agent_tok, free_tok)
    cell = np.where(obs.obstacle, OBSTACLE, cell)
    cell = np.where(obs.oob, OUT_OF_BOUNDS, cell)
    seq[0] = SEP_FOV
    seq[POS_FOV:POS_SELF] = cell.ravel()
    seq[POS_SELF] = SEP_SELF
    seq[POS_SELF + 1] = NUM_ZERO + obs.goal_offset[0]
    seq[POS_SELF + 2] = NUM_ZERO + obs.goal_offset[1]
    seq[POS_SELF + 3] = NUM_ZERO + obs.goal_distance
    seq[POS_HISTORY] = SEP_HISTORY
    seq[POS_HISTORY + 1 : POS_AGENTS] = [_act_token(a) for a in obs.history]
    seq[POS_AGENTS] = SEP_AGENTS
    p = POS_AGENTS + 1
    for nb in obs.nearby[:MAX_NEARBY]:
        seq[p : p + RECORD] = [
            SEP_AGENT,
            NUM_ZERO + nb.offset[0], NUM_ZERO + nb.offset[1],
            NUM_ZERO + nb.goal_offset[0], NUM_ZERO + nb.goal_offset[1],
            *(_act_token(a) for a in nb.history),
        ]
        p += RECORD
    seq[p] = SEP_END
    return seq


def observe_tokens(grid, positions, agent, fields, history, occupancy=None) -> np.ndarray:
    return tokenize(build_observation(grid, positions, agent, fields, history, occupancy))


def describe_tokens(seq) -> str:
    """Readable dump, one line per token group."""
    ids = [int(t) for t in seq]
    names = [VOCAB.name(i) for i in ids]  # raises UnknownId
    lines = []
    i = 0

    def take(k):
        nonlocal i
        out = names[i : i + k]
        i += k
        return out

    def pads_tail():
        j = len(names)
        while j > i and names[j - 1] == "PAD":
            j -= 1
        return j

    if names[:1] == ["SEP_FOV"] and len(names) >= POS_AGENTS + 1:
        lines.append(f"[{i}] {take(1)[0]}")
        for row in range(FOV_SIDE):
            lines.append(f"[{i}] fov {row - FOV_RADIUS:+d}: " + " ".join(take(FOV_SIDE)))
        lines.append(f"[{i}] " + " ".join(take(4)))
        lines.append(f"[{i}] " + " ".join(take(1 + HISTORY)))
        lines.append(f"[{i}] " + take(1)[0])
        while i < len(names) and names[i] == "SEP_AGENT" and i + RECORD <= len(names):
            lines.append(f"[{i}] " + " ".join(take(RECORD)))
    end = pads_tail()
    while i < end:
        lines.append(f"[{i}] " + take(1)[0])
    if i < len(names):
        lines.append(f"[{i}] PAD ×{len(names) - i}")
    return "\n".join(lines)
