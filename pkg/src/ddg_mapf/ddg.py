"""Delta Data Generation and the DAgger ablation mode.

One DDG instance: generate an instance, roll out the current policy, take
every h-th state, solve each suffix instance with the small-budget solver,
compute the cost increase between consecutive candidates, pick the largest
increase and, if it exceeds the threshold, re-solve that state with the
large-budget solver and keep the first k steps of that plan as
observation-action samples.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset, empty_records, make_records
from .distance import FieldCache
from .generators import MAZE_LOOPS, generate_instance, sample_kind
from .grid import Action, JointState, MAPFInstance, Solution, action_between
from .policy import Policy, Rollout, rollout
from .solvers import SolverBudget, Status, solve
from .tokens import observe_tokens

DELTA_MAX = math.inf  # next suffix unsolved: maximal degradation


@dataclass
class DdgConfig:
    h: int = 16  # split length
    k: int = 32  # store length
    delta_min: float = 3
    phases: int = 340  # L
    iterations: int = 1000  # J, fine-tuning steps per phase
    size: int = 409_600  # new samples per phase
    mix: float = 0.25  # share of each batch drawn from D_g
    agents: int = 32
    maze_fraction: float = 0.9  # maze : random = 9 : 1
    approx_budget: SolverBudget = field(default_factory=SolverBudget.approximate)
    accurate_budget: SolverBudget = field(default_factory=SolverBudget.accurate)
    ring_capacity: int | None = None  # default 4 * size
    episode_steps: int = 128
    skip_at_goal: bool = True
    rollout_mode: str = "sample"
    temperature: float = 1.0
    map_side: int | None = None
    maze_loops: float = MAZE_LOOPS
    seed: int = 0
    workers: int = 1
    wave: int = 8  # instances per scheduling round; fixes results independently of workers

    def __post_init__(self):
        if self.h < 1 or self.k < 1 or self.size < 1:
            raise ValueError("h, k and size must be >= 1")
        if not 0 < self.mix < 1:
            raise ValueError("mix must be in (0, 1)")
        if self.ring_capacity is None:
            self.ring_capacity = 4 * self.size

    def instance_seed(self, phase: int, counter: int) -> int:
        return int(np.random.SeedSequence([self.seed, phase, counter]).generate_state(1)[0])

    def instance(self, seed: int) -> MAPFInstance:
        kind = sample_kind(np.random.default_rng([seed, 1]), self.maze_fraction)
        return generate_instance(kind, self.agents, seed, self.map_side, self.maze_loops)


@dataclass(frozen=True)
class DeltaRecord:
    index: int
    cost: int | None  # cost(sol_i)
    cost_next: int | None  # cost(sol_{i+1})
    delta: float | None  # None when cost(sol_i) is unknown
    status: Status
    status_next: Status


@dataclass
class HarvestRecord:
    """What is needed to replay a harvest: the expert plan and the history before it."""

    seed: int
    phase: int
    start_t: int
    solution: Solution
    prefix_history: list[list[Action]]


@dataclass
class InstanceResult:
    seed: int
    rollout_steps: int
    records: list[DeltaRecord]
    selected: int | None
    delta_z: float | None
    samples: np.ndarray
    probe_calls: int = 0
    expert_calls: int = 0
    harvest: HarvestRecord | None = None
    expert_failures: int = 0


@dataclass
class PhaseStats:
    phase: int
    instances: int = 0
    hits: int = 0
    samples: int = 0
    probe_calls: int = 0
    expert_calls: int = 0
    expert_failures: int = 0
    deltas: list[float] = field(default_factory=list)
    harvests: list[HarvestRecord] = field(default_factory=list)

    @property
    def hit_rate(self) -> float:
        return self.hits / self.instances if self.instances else 0.0

    @property
    def mean_delta_z(self) -> float | None:
        finite = [d for d in self.deltas if math.isfinite(d)]
        return float(np.mean(finite)) if finite else None

    def summary(self) -> dict:
        return {"phase": self.phase, "instances": self.instances, "hits": self.hits,
                "hit_rate": self.hit_rate, "mean_delta_z": self.mean_delta_z,
                "samples": self.samples, "probe_calls": self.probe_calls,
                "expert_calls": self.expert_calls, "expert_failures": self.expert_failures}


# ---------------------------------------------------------------- algorithm steps


def extract_candidates(ro: Rollout, h: int) -> list[tuple[int, JointState]]:
    """States at timesteps 0, h, 2h, ... strictly before the last recorded state."""
    last = len(ro.states) - 1
    return [(t, ro.states[t]) for t in range(0, last, h)]


def deltas_from_costs(costs: Sequence[int | None]) -> list[float | None]:
    """cost[i+1] - cost[i]; an unsolved successor gives DELTA_MAX, an unsolved base gives None."""
    out = []
    for a, b in zip(costs, costs[1:]):
        if a is None:
            out.append(None)
        elif b is None:
            out.append(DELTA_MAX)
        else:
            out.append(b - a)
    return out


def probe_deltas(instance: MAPFInstance, candidates: Sequence[tuple[int, JointState]],
                 budget: SolverBudget, cache: FieldCache | None = None) -> list[DeltaRecord]:
    """Solve every candidate's suffix instance with ``budget`` and difference the costs."""
    if len(candidates) < 2:
        return []
    cache = FieldCache() if cache is None else cache
    fields = cache.get_many(instance.map, instance.goals)
    outs = [solve(instance.with_starts(s.positions), budget, seed=instance.seed, fields=fields)
            for _, s in candidates]
    costs = [o.soc if o.solved else None for o in outs]
    deltas = deltas_from_costs(costs)
    return [DeltaRecord(i, costs[i], costs[i + 1], deltas[i], outs[i].status, outs[i + 1].status)
            for i in range(len(deltas))]


def select_state(records: Sequence[DeltaRecord], candidates: Sequence[tuple[int, JointState]],
                 delta_min: float):
    """``(z, candidate)`` for the largest defined delta (earliest on ties) if it beats delta_min."""
    best = None
    for r in records:
        if r.delta is not None and (best is None or r.delta > best.delta):
            best = r
    if best is None or not best.delta > delta_min:
        return None
    return best.index, candidates[best.index]


def _observe_plan(instance: MAPFInstance, sol: Solution, steps: int, history: list[list[Action]],
                  fields, skip_at_goal: bool):
    """Tokens, actions, plan offsets and agents for the first ``steps`` plan steps."""
    hist = [list(h[-4:]) for h in history]
    toks, acts, ts, ags = [], [], [], []
    grid = instance.map
    for t in range(steps):
        pos = sol.config(t)
        occ = {p: i for i, p in enumerate(pos)}
        moves = sol.actions(t)
        for a in range(instance.n_agents):
            if skip_at_goal and t >= sol.costs[a]:
                continue
            toks.append(observe_tokens(grid, pos, a, fields, hist, occ))
            acts.append(int(moves[a]))
            ts.append(t)
            ags.append(a)
        for hh, m in zip(hist, moves):
            hh.append(m)
            del hh[:-4]
    return toks, acts, ts, ags


def harvest(instance: MAPFInstance, start_t: int, state: JointState, history: list[list[Action]],
            budget: SolverBudget, k: int, phase: int, cache: FieldCache | None = None,
            skip_at_goal: bool = True):
    """Accurate re-solve from ``state``; samples from the first min(k, plan length) steps.

    Returns ``(records, outcome, harvest_record)``; no samples when unsolved.
    """
    cache = FieldCache() if cache is None else cache
    fields = cache.get_many(instance.map, instance.goals)
    out = solve(instance.with_starts(state.positions), budget, seed=instance.seed, fields=fields)
    if not out.solved:
        return empty_records(), out, None
    sol = out.solution
    toks, acts, ts, ags = _observe_plan(instance, sol, min(k, sol.n_steps), history, fields,
                                        skip_at_goal)
    recs = make_records(np.array(toks, dtype=np.uint8).reshape(-1, 256), acts, instance.seed,
                        np.asarray(ts, dtype=np.int64) + start_t, ags, phase)
    prefix = [list(h[-4:]) for h in history]
    return recs, out, HarvestRecord(instance.seed, phase, start_t, sol, prefix)


def _policy_rollout(policy: Policy, instance: MAPFInstance, config: DdgConfig, cache):
    rng = np.random.default_rng([instance.seed, 2])
    return rollout(policy, instance, config.episode_steps, rng,
                   fields=cache.get_many(instance.map, instance.goals))


def process_ddg_instance(policy: Policy, config: DdgConfig, seed: int, phase: int) -> InstanceResult:
    instance = config.instance(seed)
    cache = FieldCache()
    ro = _policy_rollout(policy, instance, config, cache)
    cands = extract_candidates(ro, config.h)
    records = probe_deltas(instance, cands, config.approx_budget, cache)
    res = InstanceResult(seed, ro.steps, records, None, None, empty_records(),
                         probe_calls=len(cands) if len(cands) >= 2 else 0)
    pick = select_state(records, cands, config.delta_min)
    if pick is None:
        return res
    z, (t_z, s_z) = pick
    res.selected, res.delta_z = z, records[z].delta
    recs, out, hv = harvest(instance, t_z, s_z, ro.history_before(t_z), config.accurate_budget,
                            config.k, phase, cache, config.skip_at_goal)
    res.expert_calls = 1
    res.expert_failures = 0 if out.solved else 1
    res.samples, res.harvest = recs, hv
    return res


def process_dagger_instance(policy: Policy, config: DdgConfig, seed: int, phase: int,
                            budget: SolverBudget | None = None) -> InstanceResult:
    """Relabel every visited state with the expert's current-step actions (store length 1)."""
    budget = config.approx_budget if budget is None else budget
    instance = config.instance(seed)
    cache = FieldCache()
    fields = cache.get_many(instance.map, instance.goals)
    ro = _policy_rollout(policy, instance, config, cache)
    chunks = []
    res = InstanceResult(seed, ro.steps, [], None, None, empty_records())
    grid = instance.map
    for t in range(ro.steps):
        state = ro.states[t]
        out = solve(instance.with_starts(state.positions), budget, seed=instance.seed, fields=fields)
        res.expert_calls += 1
        if not out.solved or out.solution.n_steps == 0:
            res.expert_failures += 0 if out.solved else 1
            continue
        hist = [h[-4:] for h in ro.history_before(t)]
        pos = state.positions
        occ = {p: i for i, p in enumerate(pos)}
        moves = out.solution.actions(0)
        toks = [observe_tokens(grid, pos, a, fields, hist, occ) for a in range(instance.n_agents)]
        chunks.append(make_records(np.array(toks), [int(m) for m in moves], seed, t,
                                   np.arange(instance.n_agents), phase))
    if chunks:
        res.samples = np.concatenate(chunks)
    return res


# ---------------------------------------------------------------- phases


def _run_phase(worker, policy: Policy, config: DdgConfig, dataset: Dataset, phase: int,
               extra=()) -> PhaseStats:
    stats = PhaseStats(phase)
    collected = []
    n_new = 0
    counter = 0
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        while n_new < config.size:
            seeds = [config.instance_seed(phase, counter + j) for j in range(config.wave)]
            counter += config.wave
            args = [(policy, config, s, phase, *extra) for s in seeds]
            if pool is None:
                results = [worker(*a) for a in args]
            else:
                results = list(pool.map(worker, *zip(*args)))
            for r in results:
                stats.instances += 1
                stats.probe_calls += r.probe_calls
                stats.expert_calls += r.expert_calls
                stats.expert_failures += r.expert_failures
                if r.selected is not None:
                    stats.hits += 1
                    stats.deltas.append(r.delta_z)
                if r.harvest is not None:
                    stats.harvests.append(r.harvest)
                if len(r.samples):
                    collected.append(r.samples)
                    n_new += len(r.samples)
    finally:
        if pool is not None:
            pool.shutdown()
    new = np.concatenate(collected) if collected else empty_records()
    order = np.lexsort((new["agent"], new["timestep"], new["seed"]))
    new = new[order][: config.size]
    stats.samples = len(new)
    dataset.append(new)
    return stats


def run_generation_phase(policy: Policy, config: DdgConfig, dataset: Dataset,
                         phase: int) -> PhaseStats:
    """Collect exactly ``config.size`` new DDG samples into ``dataset``."""
    return _run_phase(process_ddg_instance, policy, config, dataset, phase)


def run_dagger_phase(policy: Policy, config: DdgConfig, dataset: Dataset, phase: int,
                     expert_budget: SolverBudget | None = None) -> PhaseStats:
    """DAgger relabelling with the same sample target as a DDG phase."""
    return _run_phase(process_dagger_instance, policy, config, dataset, phase,
                      (expert_budget or config.approx_budget,))


def expert_dataset(config: DdgConfig, n_instances: int, seed_offset: int = 10**6) -> Dataset:
    """Small expert dataset D_e: accurate solves on the same instance distribution."""
    chunks = []
    for j in range(n_instances):
        seed = config.instance_seed(seed_offset, j)
        inst = config.instance(seed)
        cache = FieldCache()
        fields = cache.get_many(inst.map, inst.goals)
        out = solve(inst, config.accurate_budget, seed=seed, fields=fields)
        if not out.solved or out.solution.n_steps == 0:
            continue
        empty = [[] for _ in range(inst.n_agents)]
        toks, acts, ts, ags = _observe_plan(inst, out.solution, out.solution.n_steps, empty,
                                            fields, config.skip_at_goal)
        chunks.append(make_records(np.array(toks), acts, seed, ts, ags, -1))
    recs = np.concatenate(chunks) if chunks else empty_records()
    return Dataset("expert", None, recs)


def replay_check(dataset: Dataset, harvests: Sequence[HarvestRecord], config: DdgConfig,
                 fraction: float = 0.01, rng: np.random.Generator | None = None) -> tuple[int, int]:
    """Rebuild sampled records from their harvest plans; returns (checked, mismatches)."""
    rng = np.random.default_rng(0) if rng is None else rng
    by_key = {(h.seed, h.phase): h for h in harvests}
    n = len(dataset)
    if n == 0:
        return 0, 0
    idx = rng.choice(n, max(1, int(round(n * fraction))), replace=False)
    bad = 0
    instances: dict[int, MAPFInstance] = {}
    for i in idx.tolist():
        s = dataset.sample(i)
        hv = by_key.get((s.seed, s.phase))
        if hv is None:
            bad += 1
            continue
        inst = instances.get(s.seed) or instances.setdefault(s.seed, config.instance(s.seed))
        t = s.timestep - hv.start_t
        sol = hv.solution
        hist = [list(h) for h in hv.prefix_history]
        for u in range(t):
            for hh, m in zip(hist, sol.actions(u)):
                hh.append(m)
        fields = FieldCache().get_many(inst.map, inst.goals)
        pos = sol.config(t)
        tok = observe_tokens(inst.map, pos, s.agent, fields, hist)
        act = action_between(sol.plans[s.agent][t], sol.plans[s.agent][t + 1])
        if act != s.action or not np.array_equal(tok, s.tokens):
            bad += 1
    return len(idx), bad


def with_overrides(config: DdgConfig, **kw) -> DdgConfig:
    return replace(config, **kw)
