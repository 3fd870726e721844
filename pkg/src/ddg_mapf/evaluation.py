"""Benchmark suites, the large-map scalability run, the ablation driver and report files.

Report CSV schemas (header rows are written even for empty inputs):

``episodes.csv``
    instance_id, map_kind, agents, termination, steps, agents_at_goal, soc,
    ref_status, ref_soc, soc_ratio, wall_time_s, decision_us
``summary.csv``
    map_kind, episodes, success_rate, success_lo, success_hi,
    independent_success_rate, mean_soc_ratio, ratio_lo, ratio_hi, ratio_n, excluded
``bench.csv``
    agents, steps, termination, independent_success_rate, total_time_s,
    field_time_s, decision_us
``curves-<mode>.csv``
    iteration, phase, train_loss, val_loss, success_rate
"""

from __future__ import annotations

import csv
import gc
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .ddg import DdgConfig
from .distance import FieldCache
from .errors import SpecInvalid
from .generators import MAP_KINDS, bounded_pairs, generate_instance
from .grid import GridMap, MAPFInstance, solution_costs
from .policy import Policy, PolicyParams, Termination, rollout
from .solvers import SolverBudget, solve
from .trainer import MODES, FineTuneResult, TrainConfig, fine_tune, write_curve

REPORT_SCHEMA = 1
Z95 = 1.959963984540054


@dataclass
class SuiteEntry:
    kind: str
    agents: Sequence[int]
    seeds: Sequence[int]
    side: int | None = None
    step_limit: int | None = None  # default 128, 256 for the city tiles

    def limit(self) -> int:
        if self.step_limit is not None:
            return self.step_limit
        return 256 if self.kind == "city" else 128


@dataclass
class SuiteSpec:
    entries: list[SuiteEntry]
    accurate_budget: SolverBudget = field(default_factory=SolverBudget.accurate)
    workers: int = 1

    def validate(self) -> None:
        if not self.entries:
            raise SpecInvalid("suite has no entries")
        for e in self.entries:
            if e.kind not in MAP_KINDS:
                raise SpecInvalid(f"unknown map kind {e.kind!r}")
            if not e.agents or min(e.agents) < 1:
                raise SpecInvalid(f"{e.kind}: agent counts must be >= 1")
            if not e.seeds:
                raise SpecInvalid(f"{e.kind}: no seeds")
            if e.limit() < 1:
                raise SpecInvalid(f"{e.kind}: step limit must be >= 1")

    def episodes(self):
        for e in self.entries:
            for n in e.agents:
                for s in e.seeds:
                    yield e, n, s


def default_suite(seeds: Sequence[int] = range(10)) -> SuiteSpec:
    seeds = list(seeds)
    return SuiteSpec([
        SuiteEntry("maze", [8, 16, 24, 32], seeds),
        SuiteEntry("random", [8, 16, 24, 32], seeds),
        SuiteEntry("warehouse", [32, 64], seeds),
        SuiteEntry("city", [64, 128], seeds),
    ])


@dataclass
class EpisodeResult:
    instance_id: str
    map_kind: str
    agents: int
    termination: str
    steps: int
    agents_at_goal: int
    soc: int
    wall_time_s: float
    decision_us: float
    ref_status: str = ""
    ref_soc: int | None = None
    soc_ratio: float | None = None
    field_time_s: float = 0.0

    @property
    def success(self) -> bool:
        return self.termination == Termination.ALL_AT_GOALS.value

    @property
    def independent_success(self) -> float:
        return self.agents_at_goal / self.agents


def run_episode(policy: Policy, instance: MAPFInstance, step_limit: int, instance_id: str = "",
                kind: str = "", rng=None, cache: FieldCache | None = None,
                fields=None) -> EpisodeResult:
    """One decentralised episode; rollout SoC on the realised trajectory."""
    t0 = time.perf_counter()
    if fields is None:
        fields = (cache or FieldCache()).get_many(instance.map, instance.goals)
    t1 = time.perf_counter()
    ro = rollout(policy, instance, step_limit, rng, fields=fields)
    wall = time.perf_counter() - t0
    plans = list(zip(*[s.positions for s in ro.states]))
    sol = solution_costs(instance, plans)
    final = ro.states[-1].positions
    at_goal = sum(p == g for p, g in zip(final, instance.goals))
    dec = 1e6 * ro.decision_time_s / ro.decisions if ro.decisions else 0.0
    return EpisodeResult(instance_id, kind, instance.n_agents, ro.termination.value, ro.steps,
                         at_goal, sol.soc, wall, dec, field_time_s=t1 - t0)


def _suite_episode(policy: Policy, kind: str, side, n: int, seed: int, limit: int,
                   budget: SolverBudget) -> EpisodeResult:
    inst = generate_instance(kind, n, seed, side)
    iid = f"{kind}-{side or 'd'}-{n:04d}-{seed:06d}"
    cache = FieldCache()
    res = run_episode(policy, inst, limit, iid, kind, np.random.default_rng([seed, 5]), cache)
    ref = solve(inst, budget, seed=seed, fields=cache.get_many(inst.map, inst.goals))
    res.ref_status = ref.status.value
    if ref.solved and ref.soc > 0:
        res.ref_soc = ref.soc
        res.soc_ratio = res.soc / ref.soc
    return res


def wilson(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return 0.0, 0.0
    p = k / n
    d = 1 + Z95 ** 2 / n
    mid = (p + Z95 ** 2 / (2 * n)) / d
    half = Z95 * math.sqrt(p * (1 - p) / n + Z95 ** 2 / (4 * n * n)) / d
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass
class KindSummary:
    map_kind: str
    episodes: int
    success_rate: float
    success_ci: tuple[float, float]
    independent_success_rate: float
    mean_soc_ratio: float | None
    ratio_ci: tuple[float, float] | None
    ratio_n: int
    excluded: int  # episodes whose centralised solve failed


@dataclass
class SuiteReport:
    rows: list[EpisodeResult]

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.instance_id)

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success for r in self.rows])) if self.rows else 0.0

    @property
    def independent_success_rate(self) -> float:
        return float(np.mean([r.independent_success for r in self.rows])) if self.rows else 0.0

    def kinds(self) -> list[str]:
        return sorted({r.map_kind for r in self.rows})

    def summary(self) -> list[KindSummary]:
        out = []
        for kind in self.kinds():
            rows = [r for r in self.rows if r.map_kind == kind]
            wins = sum(r.success for r in rows)
            ratios = np.array([r.soc_ratio for r in rows if r.soc_ratio is not None])
            mean = ci = None
            if len(ratios):
                mean = float(ratios.mean())
                half = Z95 * float(ratios.std(ddof=1)) / math.sqrt(len(ratios)) if len(ratios) > 1 else 0.0
                ci = (mean - half, mean + half)
            out.append(KindSummary(kind, len(rows), wins / len(rows), wilson(wins, len(rows)),
                                   float(np.mean([r.independent_success for r in rows])),
                                   mean, ci, len(ratios), len(rows) - len(ratios)))
        return out


def run_suite(policy: Policy, spec: SuiteSpec) -> SuiteReport:
    spec.validate()
    jobs = [(policy, e.kind, e.side, n, s, e.limit(), spec.accurate_budget)
            for e, n, s in spec.episodes()]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_suite_episode, *zip(*jobs)))
    else:
        rows = [_suite_episode(*j) for j in jobs]
    return SuiteReport(rows)


# ---------------------------------------------------------------- scalability


def bench_instance(side: int, n: int, cap: int, seed: int) -> MAPFInstance:
    starts, goals = bounded_pairs(np.random.default_rng(seed), side, n, cap)
    return MAPFInstance(GridMap.empty(side, side), tuple(starts), tuple(goals), seed)


def bench_fields(instance: MAPFInstance, margin: int, cache: FieldCache):
    """Per-agent fields confined to the start/goal bounding box plus ``margin``.

    On an empty map a rectangle containing both ends holds a shortest path, so
    the values inside the window are exact.
    """
    H, W = instance.map.height, instance.map.width
    out = []
    for (sr, sc), (gr, gc) in zip(instance.starts, instance.goals):
        win = (max(0, min(sr, gr) - margin), max(0, min(sc, gc) - margin),
               min(H, max(sr, gr) + margin + 1), min(W, max(sc, gc) + margin + 1))
        out.append(cache.get(instance.map, (gr, gc), win))
    return out


def scalability_bench(policy: Policy, side: int = 512, counts: Sequence[int] = (1024, 4096, 16384),
                      cap: int = 64, step_limit: int = 256, seed: int = 0,
                      margin: int = 8) -> list[EpisodeResult]:
    """One episode per agent count on an empty ``side`` x ``side`` map."""
    if cap < 1:
        raise SpecInvalid("distance cap must be >= 1 (cap 0 makes start = goal)")
    if side < 2 or not counts or min(counts) < 1:
        raise SpecInvalid("need side >= 2 and positive agent counts")
    rows = []
    for n in counts:
        inst = bench_instance(side, n, cap, seed + n)
        t0 = time.perf_counter()
        fields = bench_fields(inst, margin, FieldCache())
        ft = time.perf_counter() - t0
        # like timeit: cyclic GC passes scale with the live-object count and
        # would make per-agent time grow with n for reasons unrelated to the policy
        gc.collect()
        was_enabled = gc.isenabled()
        gc.disable()
        try:
            res = run_episode(policy, inst, step_limit, f"empty-{side}-{n}", "empty",
                              np.random.default_rng([seed, n]), fields=fields)
        finally:
            if was_enabled:
                gc.enable()
        res.wall_time_s += ft
        res.field_time_s = ft
        rows.append(res)
    return rows


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(icpt), r2


# ---------------------------------------------------------------- ablation


def ablation_run(base: PolicyParams, expert: Dataset, validation: Dataset,
                 probes: Sequence[MAPFInstance], ddg_cfg: DdgConfig, train_cfg: TrainConfig,
                 modes: Sequence[str] = MODES, out_dir=None) -> dict[str, FineTuneResult]:
    """Same base, seeds and iteration budget for every mode."""
    for m in modes:
        if m not in MODES:
            raise SpecInvalid(f"unknown mode {m!r}")
    out = {}
    for m in modes:
        sub = None if out_dir is None else Path(out_dir) / m
        out[m] = fine_tune(base, expert, ddg_cfg, train_cfg, m, validation, probes, sub)
    return out


# ---------------------------------------------------------------- report files


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 9))
    return str(v)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


EPISODE_HEADER = ["instance_id", "map_kind", "agents", "termination", "steps", "agents_at_goal",
                  "soc", "ref_status", "ref_soc", "soc_ratio", "wall_time_s", "decision_us"]
SUMMARY_HEADER = ["map_kind", "episodes", "success_rate", "success_lo", "success_hi",
                  "independent_success_rate", "mean_soc_ratio", "ratio_lo", "ratio_hi",
                  "ratio_n", "excluded"]
BENCH_HEADER = ["agents", "steps", "termination", "independent_success_rate", "total_time_s",
                "field_time_s", "decision_us"]


def episodes_csv(report: SuiteReport) -> str:
    return _csv(EPISODE_HEADER, ([r.instance_id, r.map_kind, r.agents, r.termination, r.steps,
                                  r.agents_at_goal, r.soc, r.ref_status, r.ref_soc, r.soc_ratio,
                                  r.wall_time_s, r.decision_us] for r in report.rows))


def summary_csv(report: SuiteReport) -> str:
    rows = []
    for s in report.summary():
        lo, hi = s.ratio_ci or (None, None)
        rows.append([s.map_kind, s.episodes, s.success_rate, *s.success_ci,
                     s.independent_success_rate, s.mean_soc_ratio, lo, hi, s.ratio_n, s.excluded])
    return _csv(SUMMARY_HEADER, rows)


def bench_csv(rows: Sequence[EpisodeResult]) -> str:
    return _csv(BENCH_HEADER, ([r.agents, r.steps, r.termination, r.independent_success,
                                r.wall_time_s, r.field_time_s, r.decision_us] for r in rows))


def _write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def report(out_dir, suite: SuiteReport | None = None, bench: Sequence[EpisodeResult] | None = None,
           ablation: dict[str, FineTuneResult] | None = None) -> list[Path]:
    """Write CSV/JSON artefacts; identical inputs give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    doc: dict = {"schema_version": REPORT_SCHEMA}
    if suite is not None:
        for name, text in (("episodes.csv", episodes_csv(suite)), ("summary.csv", summary_csv(suite))):
            _write(out / name, text)
            written.append(out / name)
        doc["suite"] = {"success_rate": suite.success_rate,
                        "independent_success_rate": suite.independent_success_rate,
                        "kinds": [asdict(s) for s in suite.summary()]}
    if bench is not None:
        _write(out / "bench.csv", bench_csv(bench))
        written.append(out / "bench.csv")
        if len(bench) >= 2:
            s, i, r2 = linear_fit([r.agents for r in bench], [r.wall_time_s for r in bench])
            doc["bench_fit"] = {"slope_s_per_agent": s, "intercept_s": i, "r2": r2}
    if ablation is not None:
        doc["ablation"] = {}
        for mode, res in sorted(ablation.items()):
            p = out / f"curves-{mode}.csv"
            write_curve(p, res.curve)
            written.append(p)
            fin = res.final() if any(c.val_loss is not None for c in res.curve) else None
            doc["ablation"][mode] = {"expert_calls": res.expert_calls,
                                     "final_val_loss": None if fin is None else fin.val_loss,
                                     "final_success_rate": None if fin is None else fin.success_rate}
    _write(out / "report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(out / "report.json")
    return written
