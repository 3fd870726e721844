"""Decentralised policies and rollouts.

Every policy maps a :class:`StepContext` to one action per agent, each agent
deciding from its own local view. ``LinearPolicy`` is the trainable one: a
softmax over linear scores of one-hot (token position, token id) features.
"""

from __future__ import annotations

import enum
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .distance import UNREACHABLE, DistanceField, FieldCache
from .errors import FormatError, NonFiniteScore
from .grid import (ACTIONS, DELTAS, N_ACTIONS, Action, Cell, GridMap, JointState,
                   MAPFInstance, resolve_moves)
from .tokens import (AGENT_UNREACHABLE, AGENT_ZERO, CLAMP, CONTEXT, NUM_ZERO, OBSTACLE,
                     OUT_OF_BOUNDS, UNREACHABLE_TOKEN, VOCAB_SIZE, fov_position, observe_tokens)

FEATURE_TAG = "onehot-pos-tok-v1"
FEATURE_DIM = CONTEXT * VOCAB_SIZE
_POS_OFFSET = np.arange(CONTEXT, dtype=np.int64) * VOCAB_SIZE


@dataclass
class PolicyParams:
    weights: np.ndarray  # (FEATURE_DIM, 5)
    tag: str = FEATURE_TAG

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (FEATURE_DIM, N_ACTIONS):
            raise ValueError(f"weights must be {(FEATURE_DIM, N_ACTIONS)}, got {self.weights.shape}")

    @classmethod
    def zeros(cls) -> "PolicyParams":
        return cls(np.zeros((FEATURE_DIM, N_ACTIONS)))

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.weights.copy(), self.tag)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.weights).all())


def features(tokens: np.ndarray) -> np.ndarray:
    """Active feature indices: position * 67 + token id (last axis = positions)."""
    return _POS_OFFSET + np.asarray(tokens, dtype=np.int64)


def scores(params: PolicyParams, tokens: np.ndarray) -> np.ndarray:
    """Linear action scores for one (256,) or a batch (B, 256) of token sequences."""
    return params.weights[features(tokens)].sum(axis=-2)


def softmax(s: np.ndarray) -> np.ndarray:
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    if not np.isfinite(p).all():
        raise NonFiniteScore("action scores are not finite; parameters are corrupt")
    return p


def act_policy(params: PolicyParams, tokens: np.ndarray, mode: str = "greedy",
               rng: np.random.Generator | None = None, temperature: float = 1.0):
    """Action and its distribution; greedy takes the lowest-index argmax."""
    p = softmax(scores(params, tokens) / temperature)
    if mode == "greedy":
        a = int(np.argmax(p))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        a = int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), N_ACTIONS - 1))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Action(a), p


def greedy_params(step: float = 10.0, forbid: float = 1e3) -> PolicyParams:
    """Linear weights whose greedy decisions coincide with :func:`act_greedy`."""
    W = np.zeros((CONTEXT, VOCAB_SIZE, N_ACTIONS))
    for a in ACTIONS[:4]:
        pos = fov_position(*DELTAS[a])
        for v in range(-CLAMP, CLAMP + 1):
            W[pos, NUM_ZERO + v, a] = -v * step
            W[pos, AGENT_ZERO + v, a] = -forbid
        for tok in (OBSTACLE, OUT_OF_BOUNDS, UNREACHABLE_TOKEN, AGENT_UNREACHABLE):
            W[pos, tok, a] = -forbid
    return PolicyParams(W.reshape(FEATURE_DIM, N_ACTIONS))


# ---------------------------------------------------------------- params file

_MAGIC = b"DDGP"
_VERSION = 1
_HEADER = struct.Struct("<4sHHII32s")


def save_params(params: PolicyParams, path) -> None:
    rows, cols = params.weights.shape
    tag = params.tag.encode()
    if len(tag) > 32:
        raise ValueError("feature tag longer than 32 bytes")
    head = _HEADER.pack(_MAGIC, _VERSION, 0, rows, cols, tag)
    body = params.weights.astype("<f8").tobytes()
    crc = struct.pack("<I", zlib.crc32(head + body))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(head + body + crc)
    tmp.replace(path)


def load_params(path) -> PolicyParams:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 4:
        raise FormatError("truncated params file")
    magic, version, _, rows, cols, tag = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError("not a policy params file")
    if version != _VERSION:
        raise FormatError(f"unsupported params layout version {version}")
    end = _HEADER.size + rows * cols * 8
    if len(data) != end + 4:
        raise FormatError("params file size does not match its header")
    (crc,) = struct.unpack_from("<I", data, end)
    if zlib.crc32(data[:end]) != crc:
        raise FormatError("params checksum mismatch")
    w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=_HEADER.size).reshape(rows, cols)
    return PolicyParams(w.copy(), tag.rstrip(b"\0").decode())


# ---------------------------------------------------------------- policies


@dataclass
class StepContext:
    grid: GridMap
    positions: Sequence[Cell]
    goals: Sequence[Cell]
    fields: Sequence[DistanceField]
    history: Sequence[Sequence[int]]
    timestep: int
    occupancy: Mapping[Cell, int] = field(default_factory=dict)


class Policy:
    """Base class; ``reset`` is called once per episode before the first ``act``."""

    name = "policy"

    def reset(self, instance: MAPFInstance, fields: Sequence[DistanceField]) -> None:
        pass

    def act(self, ctx: StepContext, rng: np.random.Generator) -> list[Action]:
        raise NotImplementedError


def act_greedy(grid: GridMap, position: Cell, field: DistanceField,
               occupancy: Mapping[Cell, int]) -> Action:
    """Move to the neighbour (or stay) with the lowest cost-to-go, skipping occupied cells.

    Ties go to the first action in Up, Down, Left, Right, Wait order.
    """
    r, c = position
    best, best_v = Action.WAIT, UNREACHABLE
    for a in ACTIONS:
        dr, dc = DELTAS[a]
        cell = (r + dr, c + dc)
        if a != Action.WAIT and (not grid.is_free(cell) or cell in occupancy):
            continue
        v = field.value(cell)
        if v < best_v:
            best, best_v = a, v
    return best


class GreedyPolicy(Policy):
    name = "greedy"

    def act(self, ctx, rng=None):
        return [act_greedy(ctx.grid, p, f, ctx.occupancy) for p, f in zip(ctx.positions, ctx.fields)]


class CrowdGreedyPolicy(Policy):
    """Greedy descent with random tie-breaks, back-off and side-steps.

    An agent that did not move last step holds with probability ``backoff``
    (breaks symmetric collisions); an agent whose every descending move is
    blocked by another agent side-steps with probability ``sidestep``.
    """

    name = "crowd-greedy"

    def __init__(self, backoff: float = 0.5, sidestep: float = 0.25):
        self.backoff = backoff
        self.sidestep = sidestep

    def _one(self, grid, pos, field, occ, last, u):
        r, c = pos
        own = field.value(pos)
        down, side = [], []
        for a in ACTIONS[:4]:
            dr, dc = DELTAS[a]
            cell = (r + dr, c + dc)
            if not grid.is_free(cell):
                continue
            v = field.value(cell)
            if v == UNREACHABLE:
                continue
            if v < own:
                down.append((cell in occ, a))
            elif cell not in occ:
                side.append(a)
        free = [a for blocked, a in down if not blocked]
        if free:
            if last == Action.WAIT and u[0] < self.backoff:
                return Action.WAIT
            return free[int(u[1] * len(free))]
        if down and side and u[2] < self.sidestep:
            return side[int(u[1] * len(side))]
        return Action.WAIT

    def act(self, ctx, rng):
        u = rng.random((len(ctx.positions), 3))
        out = []
        for i, (p, f) in enumerate(zip(ctx.positions, ctx.fields)):
            h = ctx.history[i]
            out.append(self._one(ctx.grid, p, f, ctx.occupancy, h[-1] if h else None, u[i]))
        return out


class RandomPolicy(Policy):
    name = "random"

    def act(self, ctx, rng):
        return [Action(int(a)) for a in rng.integers(N_ACTIONS, size=len(ctx.positions))]


class LinearPolicy(Policy):
    name = "linear"

    def __init__(self, params: PolicyParams, mode: str = "greedy", temperature: float = 1.0):
        self.params = params
        self.mode = mode
        self.temperature = temperature

    def tokens(self, ctx: StepContext) -> np.ndarray:
        return np.stack([
            observe_tokens(ctx.grid, ctx.positions, i, ctx.fields, ctx.history, ctx.occupancy)
            for i in range(len(ctx.positions))
        ])

    def act(self, ctx, rng):
        p = softmax(scores(self.params, self.tokens(ctx)) / self.temperature)
        if self.mode == "greedy":
            return [Action(int(a)) for a in p.argmax(axis=1)]
        u = rng.random(len(p))
        idx = (np.cumsum(p, axis=1) <= u[:, None]).sum(axis=1)
        return [Action(int(min(a, N_ACTIONS - 1))) for a in idx]


class ExpertPolicy(Policy):
    """Plays back a centralised solution (falls back to Wait if none was found)."""

    name = "expert"

    def __init__(self, budget, seed: int | None = None):
        self.budget = budget
        self.seed = seed
        self.solution = None

    def reset(self, instance, fields):
        from .solvers import solve

        out = solve(instance, self.budget, seed=self.seed, fields=fields)
        self.solution = out.solution

    def act(self, ctx, rng):
        sol, t = self.solution, ctx.timestep
        if sol is None or t >= sol.n_steps:
            return [Action.WAIT] * len(ctx.positions)
        if tuple(ctx.positions) != sol.config(t):
            return [Action.WAIT] * len(ctx.positions)
        return sol.actions(t)


# ---------------------------------------------------------------- rollout


class Termination(str, enum.Enum):
    ALL_AT_GOALS = "AllAtGoals"
    STEP_LIMIT = "StepLimit"


@dataclass
class Rollout:
    states: list[JointState]
    actions: list[tuple[Action, ...]]  # executed joint actions between consecutive states
    termination: Termination
    decision_time_s: float = 0.0
    decisions: int = 0

    def __len__(self):
        return len(self.states)

    @property
    def steps(self) -> int:
        return len(self.actions)

    def history_before(self, t: int) -> list[list[Action]]:
        """Executed actions of every agent strictly before timestep ``t``."""
        n = len(self.states[0].positions)
        return [[self.actions[s][i] for s in range(t)] for i in range(n)]


def _executed(grid: GridMap, old: np.ndarray, new: np.ndarray) -> list[Action]:
    d = new - old
    out = []
    W = grid.width
    for x in d.tolist():
        if x == 0:
            out.append(Action.WAIT)
        elif x == -W:
            out.append(Action.UP)
        elif x == W:
            out.append(Action.DOWN)
        elif x == -1:
            out.append(Action.LEFT)
        else:
            out.append(Action.RIGHT)
    return out


def rollout(policy: Policy, instance: MAPFInstance, max_steps: int,
            rng: np.random.Generator | int | None = None,
            fields: Sequence[DistanceField] | None = None,
            cache: FieldCache | None = None, record: bool = True) -> Rollout:
    """Run ``policy`` in execution mode until all agents sit on goals or ``max_steps``."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(instance.seed if rng is None else rng)
    grid = instance.map
    W = grid.width
    if fields is None:
        fields = (cache or FieldCache()).get_many(grid, instance.goals)
    policy.reset(instance, fields)
    goals_flat = np.array([r * W + c for r, c in instance.goals], dtype=np.int64)
    pos = np.array([r * W + c for r, c in instance.starts], dtype=np.int64)
    positions = list(instance.starts)
    history: list[list[Action]] = [[] for _ in positions]
    states = [JointState(tuple(positions), 0)]
    actions: list[tuple[Action, ...]] = []
    decision_time = 0.0
    decisions = 0
    termination = Termination.STEP_LIMIT
    if np.array_equal(pos, goals_flat):
        return Rollout(states, actions, Termination.ALL_AT_GOALS)
    for t in range(max_steps):
        ctx = StepContext(grid, positions, instance.goals, fields, history, t,
                          {p: i for i, p in enumerate(positions)})
        t0 = time.perf_counter()
        proposed = policy.act(ctx, rng)
        decision_time += time.perf_counter() - t0
        decisions += len(positions)
        new = resolve_moves(grid, pos, np.fromiter((int(a) for a in proposed), np.int64, len(proposed)))
        done = _executed(grid, pos, new)
        for h, a in zip(history, done):
            h.append(a)
        pos = new
        rows, cols = np.divmod(pos, W)
        positions = list(zip(rows.tolist(), cols.tolist()))
        if record:
            states.append(JointState(tuple(positions), t + 1))
            actions.append(tuple(done))
        if np.array_equal(pos, goals_flat):
            termination = Termination.ALL_AT_GOALS
            break
    if not record:
        states.append(JointState(tuple(positions), len(history[0])))
    return Rollout(states, actions, termination, decision_time, decisions)
