"""Ready-made desk-scale experiment settings shared by scripts, the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .ddg import DdgConfig, expert_dataset
from .grid import MAPFInstance
from .policy import PolicyParams, RandomPolicy, Termination, rollout
from .solvers import SolverBudget
from .trainer import TrainConfig, behaviour_clone

# seed-space offsets keeping D_e, validation and probe instances disjoint
EXPERT_STREAM = 1_000_000
VALIDATION_STREAM = 2_000_000
PROBE_STREAM = 3_000_000


def toy_ddg_config(**kw) -> DdgConfig:
    """9x9 braided mazes with 4 agents, 3 phases of 2,000 samples."""
    base = dict(agents=4, map_side=9, maze_fraction=1.0, maze_loops=0.3, size=2000, phases=3,
                iterations=200, approx_budget=SolverBudget(None, 200),
                accurate_budget=SolverBudget(None, 2000), episode_steps=64)
    base.update(kw)
    return DdgConfig(**base)


@dataclass
class ToySetup:
    ddg: DdgConfig = field(default_factory=toy_ddg_config)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=0.3, iterations=200))
    expert_instances: int = 100
    validation_instances: int = 40
    probe_instances: int = 50
    pretrain_iterations: int = 2000


@dataclass
class Prepared:
    expert: Dataset
    validation: Dataset
    probes: list[MAPFInstance]
    base: PolicyParams


def probe_set(cfg: DdgConfig, n: int) -> list[MAPFInstance]:
    return [cfg.instance(cfg.instance_seed(PROBE_STREAM, j)) for j in range(n)]


def prepare(setup: ToySetup) -> Prepared:
    """D_e, held-out expert samples, probe instances and a behaviour-cloned base policy."""
    cfg = setup.ddg
    expert = expert_dataset(cfg, setup.expert_instances, EXPERT_STREAM)
    val = expert_dataset(cfg, setup.validation_instances, VALIDATION_STREAM)
    probes = probe_set(cfg, setup.probe_instances)
    base = behaviour_clone(PolicyParams.zeros(), expert, setup.train, setup.pretrain_iterations)
    return Prepared(expert, val, probes, base)


def random_success(probes, max_steps: int = 128, seed: int = 1) -> float:
    wins = sum(rollout(RandomPolicy(), p, max_steps, np.random.default_rng([seed, j]),
                       record=False).termination is Termination.ALL_AT_GOALS
               for j, p in enumerate(probes))
    return wins / len(probes) if probes else 0.0
