"""Imitation objective, mixed-batch sampling and the fine-tuning loop.

The objective is the mean negative log-likelihood of expert actions under the
linear softmax policy. Optimisation is plain mini-batch gradient descent with a
cosine-decayed learning rate.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset, read_shard
from .ddg import DdgConfig, PhaseStats, run_dagger_phase, run_generation_phase
from .grid import N_ACTIONS, MAPFInstance
from .policy import (FEATURE_DIM, LinearPolicy, PolicyParams, Termination, features,
                     rollout, save_params, scores)

log = logging.getLogger(__name__)

MODES = ("plain", "ddg", "dagger")
OPTIMIZER_NOTE = "sgd+cosine (stand-in; fine-tuning optimizer not given)"


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1.0
    lr_min: float = 0.0
    schedule: str = "cosine"  # or "constant"
    iterations: int = 1000  # J per phase
    mix: float = 0.25
    seed: int = 0
    val_shard: str | None = None
    eval_every: int = 0  # 0: only at phase ends
    probe_steps: int = 128

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if not 0 <= self.mix < 1:
            raise ValueError("mix must be in [0, 1)")
        g = self.mix * self.batch_size
        if abs(g - round(g)) > 1e-9:
            raise ValueError(f"mix * batch_size = {g} is not an integer")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    @property
    def generated_per_batch(self) -> int:
        return int(round(self.mix * self.batch_size))


@dataclass
class Batch:
    tokens: np.ndarray  # (B, 256)
    actions: np.ndarray  # (B,)
    generated: np.ndarray  # (B,) bool, True for samples drawn from D_g

    def __len__(self):
        return len(self.actions)

    @classmethod
    def from_dataset(cls, ds: Dataset, generated: bool = False) -> "Batch":
        return cls(ds.tokens, ds.actions.astype(np.int64), np.full(len(ds), generated))

    @property
    def n_generated(self) -> int:
        return int(self.generated.sum())


# ---------------------------------------------------------------- objective


def _log_probs(params: PolicyParams, tokens: np.ndarray) -> np.ndarray:
    s = scores(params, tokens)
    s = s - s.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def loss(params: PolicyParams, batch: Batch) -> float:
    if len(batch) == 0:
        raise ValueError("empty batch")
    lp = _log_probs(params, batch.tokens)
    return float(-lp[np.arange(len(batch)), batch.actions].mean())


def loss_and_grad(params: PolicyParams, batch: Batch) -> tuple[float, np.ndarray]:
    if len(batch) == 0:
        raise ValueError("empty batch")
    B = len(batch)
    lp = _log_probs(params, batch.tokens)
    rows = np.arange(B)
    d = np.exp(lp)
    d[rows, batch.actions] -= 1.0
    d /= B
    idx = features(batch.tokens).ravel()
    g = np.empty((FEATURE_DIM, N_ACTIONS))
    per_feat = np.repeat(d, batch.tokens.shape[1], axis=0)
    for a in range(N_ACTIONS):
        g[:, a] = np.bincount(idx, weights=per_feat[:, a], minlength=FEATURE_DIM)
    return float(-lp[rows, batch.actions].mean()), g


def grad(params: PolicyParams, batch: Batch) -> np.ndarray:
    return loss_and_grad(params, batch)[1]


def learning_rate(cfg: TrainConfig, it: int, total: int) -> float:
    if cfg.schedule == "constant" or total <= 1:
        return cfg.lr
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1 + math.cos(math.pi * it / total))


# ---------------------------------------------------------------- batches


class MixedBatchSampler:
    """Per-phase batch source: D_g drawn without replacement, D_e uniformly.

    The D_g share per batch is capped at |D_g| // J so that no generated
    sample repeats within one phase of J iterations.
    """

    def __init__(self, expert: Dataset, generated: Dataset | None, cfg: TrainConfig,
                 rng: np.random.Generator, iterations: int | None = None):
        if len(expert) == 0:
            raise ValueError("expert dataset is empty")
        self.expert = expert
        self.generated = generated
        self.cfg = cfg
        self.rng = rng
        J = cfg.iterations if iterations is None else iterations
        n_g = 0 if generated is None else len(generated)
        self.share = min(cfg.generated_per_batch, n_g // max(J, 1))
        self.short = self.share < cfg.generated_per_batch
        if self.short and generated is not None:
            log.warning("D_g holds %d samples; generated share reduced to %d per batch",
                        n_g, self.share)
        self.order = rng.permutation(n_g) if self.share else np.zeros(0, dtype=np.int64)
        self.cursor = 0

    def next(self) -> Batch:
        B = self.cfg.batch_size
        g_idx = self.order[self.cursor : self.cursor + self.share]
        self.cursor += self.share
        e_idx = self.rng.integers(len(self.expert), size=B - len(g_idx))
        parts_t = [self.expert.tokens[e_idx]]
        parts_a = [self.expert.actions[e_idx]]
        if len(g_idx):
            parts_t.append(self.generated.tokens[g_idx])
            parts_a.append(self.generated.actions[g_idx])
        src = np.zeros(B, dtype=bool)
        src[len(e_idx):] = True
        return Batch(np.concatenate(parts_t), np.concatenate(parts_a).astype(np.int64), src)


def sample_mixed_batch(expert: Dataset, generated: Dataset | None, cfg: TrainConfig,
                       rng: np.random.Generator) -> Batch:
    """One stand-alone mixed batch (a fresh sampler)."""
    return MixedBatchSampler(expert, generated, cfg, rng).next()


# ---------------------------------------------------------------- validation


def success_rate(params: PolicyParams, instances: Sequence[MAPFInstance], max_steps: int = 128
                 ) -> float:
    if not instances:
        return 0.0
    pol = LinearPolicy(params, "greedy")
    wins = sum(rollout(pol, inst, max_steps, record=False).termination is Termination.ALL_AT_GOALS
               for inst in instances)
    return wins / len(instances)


def validation_metrics(params: PolicyParams, validation, probes: Sequence[MAPFInstance],
                       max_steps: int = 128) -> tuple[float, float]:
    """(held-out loss, greedy success rate); ``validation`` is a Dataset or a shard path."""
    if not isinstance(validation, Dataset):
        validation = Dataset("expert", None, read_shard(validation))
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    return loss(params, Batch.from_dataset(validation)), success_rate(params, probes, max_steps)


# ---------------------------------------------------------------- fine-tuning


@dataclass
class CurvePoint:
    iteration: int
    phase: int
    train_loss: float
    val_loss: float | None = None
    success_rate: float | None = None


@dataclass
class FineTuneResult:
    params: PolicyParams
    curve: list[CurvePoint] = field(default_factory=list)
    phases: list[PhaseStats] = field(default_factory=list)
    generated: Dataset | None = None

    @property
    def expert_calls(self) -> int:
        return sum(p.expert_calls for p in self.phases)

    def final(self) -> CurvePoint:
        return [p for p in self.curve if p.val_loss is not None][-1]

    def phase_start_losses(self, window: int = 10) -> list[float]:
        """Mean train loss over the first ``window`` iterations of each phase.

        The mean over the last ``window`` iterations of the run is appended, so
        L phases give L + 1 values and L consecutive differences.
        """
        by_phase: dict[int, list[float]] = {}
        for p in self.curve:
            by_phase.setdefault(p.phase, []).append(p.train_loss)
        out = [float(np.mean(v[:window])) for _, v in sorted(by_phase.items())]
        if by_phase:
            out.append(float(np.mean([p.train_loss for p in self.curve[-window:]])))
        return out


def config_hash(*configs) -> str:
    blob = json.dumps([asdict(c) for c in configs], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_curve(path, curve: Sequence[CurvePoint]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "phase", "train_loss", "val_loss", "success_rate"])
        for p in curve:
            w.writerow([p.iteration, p.phase, repr(p.train_loss),
                        "" if p.val_loss is None else repr(p.val_loss),
                        "" if p.success_rate is None else repr(p.success_rate)])
    tmp.replace(path)


def _checkpoint(out_dir: Path, params: PolicyParams, phase: int, iteration: int, chash: str,
                mode: str) -> None:
    p = out_dir / f"phase{phase}.params"
    save_params(params, p)
    manifest = {"phase": phase, "iteration": iteration, "config_hash": chash, "mode": mode,
                "params": p.name, "optimizer": OPTIMIZER_NOTE}
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(out_dir / "manifest.json")


def fine_tune(params: PolicyParams, expert: Dataset, ddg_cfg: DdgConfig, cfg: TrainConfig,
              mode: str = "ddg", validation: Dataset | None = None,
              probes: Sequence[MAPFInstance] = (), out_dir=None,
              generated: Dataset | None = None) -> FineTuneResult:
    """L phases of (data generation, J descent steps); ``plain`` skips generation.

    ``cfg.iterations`` is J, ``ddg_cfg.phases`` is L. The learning rate decays
    over all L * J iterations. Every phase ends with a validation point and,
    with ``out_dir``, an atomic checkpoint plus manifest.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    params = params.copy()
    rng = np.random.default_rng([cfg.seed, 7])
    gen = Dataset("generated", ddg_cfg.ring_capacity) if generated is None else generated
    result = FineTuneResult(params, generated=gen)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(ddg_cfg, cfg)
    total = ddg_cfg.phases * cfg.iterations
    if validation is None and cfg.val_shard:
        validation = Dataset("expert", None, read_shard(cfg.val_shard))
    it = 0
    for phase in range(ddg_cfg.phases):
        policy = LinearPolicy(params, ddg_cfg.rollout_mode, ddg_cfg.temperature)
        if mode == "ddg":
            result.phases.append(run_generation_phase(policy, ddg_cfg, gen, phase))
        elif mode == "dagger":
            result.phases.append(run_dagger_phase(policy, ddg_cfg, gen, phase))
        sampler = MixedBatchSampler(expert, gen if mode != "plain" else None, cfg, rng)
        for j in range(cfg.iterations):
            batch = sampler.next()
            value, g = loss_and_grad(params, batch)
            params.weights -= learning_rate(cfg, it, total) * g
            pt = CurvePoint(it, phase, value)
            last = j == cfg.iterations - 1
            if validation is not None and (last or (cfg.eval_every and it % cfg.eval_every == 0)):
                pt.val_loss, pt.success_rate = validation_metrics(params, validation, probes,
                                                                  cfg.probe_steps)
            result.curve.append(pt)
            it += 1
        if out is not None:
            _checkpoint(out, params, phase, it, chash, mode)
            write_curve(out / "curve.csv", result.curve)
    result.params = params
    return result


def behaviour_clone(params: PolicyParams, expert: Dataset, cfg: TrainConfig,
                    iterations: int) -> PolicyParams:
    """Pre-training on D_e alone (same optimiser, constant rate)."""
    params = params.copy()
    rng = np.random.default_rng([cfg.seed, 11])
    sampler = MixedBatchSampler(expert, None, cfg, rng, iterations)
    for _ in range(iterations):
        params.weights -= cfg.lr * grad(params, sampler.next())
    return params
