"""Command-line front end: ``ddg-mapf <verb> [options]``.

Configuration comes from an optional TOML file with sections ``[ddg]``,
``[train]``, ``[eval]`` and ``[bench]``, plus ``--set section.key=value``
overrides (values parsed as TOML literals). Every run writes
``manifest-<verb>.json`` into its output directory.

Exit codes: 0 success, 2 invalid configuration or spec, 3 I/O or file format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .dataset import Dataset, dump_shard
from .ddg import DdgConfig, expert_dataset, run_dagger_phase, run_generation_phase
from .errors import FormatError, MapfError, SpecInvalid
from .evaluation import SuiteEntry, SuiteSpec, default_suite, report, run_suite, scalability_bench, ablation_run
from .experiments import EXPERT_STREAM, VALIDATION_STREAM, probe_set
from .generators import generate_instance
from .grid import save_instance, save_map
from .policy import (CrowdGreedyPolicy, ExpertPolicy, GreedyPolicy, LinearPolicy, PolicyParams,
                     RandomPolicy, load_params, save_params)
from .solvers import SolverBudget
from .tokens import VOCAB
from .trainer import TrainConfig, behaviour_clone, fine_tune

log = logging.getLogger("ddg_mapf")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
SECTIONS = ("ddg", "train", "eval", "bench")


# ---------------------------------------------------------------- config


def parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text  # bare strings


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = {s: {} for s in SECTIONS}
    if path:
        with open(path, "rb") as f:
            data = tomli.load(f)
        for k, v in data.items():
            if k not in SECTIONS or not isinstance(v, dict):
                raise SpecInvalid(f"unknown config section {k!r}")
            cfg[k].update(v)
    for item in overrides:
        key, sep, val = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot or sec not in SECTIONS:
            raise SpecInvalid(f"bad override {item!r}; expected section.key=value")
        cfg[sec][name] = parse_value(val.strip())
    return cfg


def _budget(v) -> SolverBudget:
    if isinstance(v, SolverBudget):
        return v
    if isinstance(v, dict):
        return SolverBudget(v.get("time_ms"), v.get("node_limit"))
    raise SpecInvalid(f"budget must be a table with time_ms/node_limit, got {v!r}")


def _build(cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise SpecInvalid(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise SpecInvalid(f"{cls.__name__}: {e}") from e


def ddg_config(cfg: dict) -> DdgConfig:
    v = dict(cfg["ddg"])
    for k in ("approx_budget", "accurate_budget"):
        if k in v:
            v[k] = _budget(v[k])
    return _build(DdgConfig, v)


def train_config(cfg: dict) -> TrainConfig:
    return _build(TrainConfig, dict(cfg["train"]))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_manifest(out: Path, verb: str, args, cfg: dict, extra: dict | None = None) -> Path:
    body = {"verb": verb, "config": _jsonable(cfg),
            "args": {k: v for k, v in vars(args).items() if k != "func"}}
    blob = json.dumps(body, sort_keys=True, default=str)
    body["config_hash"] = hashlib.sha256(blob.encode()).hexdigest()[:16]
    body["versions"] = {"ddg_mapf": __version__, "numpy": np.__version__,
                        "python": platform.python_version()}
    if extra:
        body.update(_jsonable(extra))
    out.mkdir(parents=True, exist_ok=True)
    p = out / f"manifest-{verb}.json"
    p.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    return p


# ---------------------------------------------------------------- policies


def make_policy(name: str, params_path: str | None, cfg: dict, mode: str = "greedy"):
    if name == "greedy":
        return GreedyPolicy()
    if name == "crowd":
        return CrowdGreedyPolicy()
    if name == "random":
        return RandomPolicy()
    if name == "expert":
        return ExpertPolicy(ddg_config(cfg).accurate_budget)
    if name == "linear":
        params = load_params(params_path) if params_path else PolicyParams.zeros()
        return LinearPolicy(params, mode)
    raise SpecInvalid(f"unknown policy {name!r}")


def _params(path: str | None) -> PolicyParams:
    return load_params(path) if path else PolicyParams.zeros()


# ---------------------------------------------------------------- verbs


def cmd_gen_maps(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(args.count):
        seed = args.seed + j
        inst = generate_instance(args.kind, args.agents, seed, args.side)
        mp = out / f"{args.kind}-{seed:06d}.map"
        save_map(inst.map, mp)
        save_instance(inst, out / f"{args.kind}-{seed:06d}.inst", mp.name)
    write_manifest(out, "gen-maps", args, cfg)
    print(f"wrote {args.count} {args.kind} maps to {out}")


def cmd_gen_expert(args, cfg):
    dc = ddg_config(cfg)
    out = Path(args.out)
    ds = expert_dataset(dc, args.instances, EXPERT_STREAM if not args.validation else VALIDATION_STREAM)
    ds.save(out)
    write_manifest(out, "gen-expert", args, cfg, {"samples": len(ds)})
    print(f"{len(ds)} expert samples -> {out}")


def _gen_run(args, cfg, dagger: bool):
    dc = ddg_config(cfg)
    out = Path(args.out)
    policy = make_policy(args.policy, args.params, cfg, dc.rollout_mode)
    ds = Dataset("generated", dc.ring_capacity)
    stats = []
    for phase in range(dc.phases):
        st = (run_dagger_phase if dagger else run_generation_phase)(policy, dc, ds, phase)
        stats.append(st.summary())
        print(json.dumps(st.summary(), sort_keys=True))
    ds.save(out)
    write_manifest(out, "dagger-run" if dagger else "ddg-run", args, cfg, {"phases": stats})


def cmd_ddg_run(args, cfg):
    _gen_run(args, cfg, False)


def cmd_dagger_run(args, cfg):
    _gen_run(args, cfg, True)


def cmd_train(args, cfg):
    dc, tc = ddg_config(cfg), train_config(cfg)
    out = Path(args.out)
    expert = Dataset.load(args.expert, "expert")
    if len(expert) == 0:
        raise FormatError(f"no expert shards in {args.expert}")
    val = Dataset.load(args.validation, "expert") if args.validation else None
    probes = probe_set(dc, args.probes) if args.probes else []
    base = _params(args.params)
    if args.pretrain:
        base = behaviour_clone(base, expert, tc, args.pretrain)
    res = fine_tune(base, expert, dc, tc, args.mode, val, probes, out)
    save_params(res.params, out / "final.params")
    write_manifest(out, "train", args, cfg, {"phases": [p.summary() for p in res.phases],
                                             "expert_calls": res.expert_calls})
    print(f"final params -> {out / 'final.params'}")


def cmd_eval(args, cfg):
    ev = cfg["eval"]
    dc = ddg_config(cfg)
    seeds = list(range(args.seed, args.seed + args.seeds))
    if "entries" in ev:
        entries = [_build(SuiteEntry, {**e, "seeds": e.get("seeds", seeds)}) for e in ev["entries"]]
        spec = SuiteSpec(entries, dc.accurate_budget, ev.get("workers", 1))
    else:
        spec = default_suite(seeds)
        spec.accurate_budget = dc.accurate_budget
    policy = make_policy(args.policy, args.params, cfg)
    rep = run_suite(policy, spec)
    out = Path(args.out)
    report(out, suite=rep)
    write_manifest(out, "eval", args, cfg)
    for s in rep.summary():
        print(f"{s.map_kind}: success {s.success_rate:.3f} isr {s.independent_success_rate:.3f} "
              f"soc_ratio {s.mean_soc_ratio}")


def cmd_bench(args, cfg):
    b = cfg["bench"]
    counts = b.get("counts", [1024, 4096, 16384])
    policy = make_policy(args.policy, args.params, cfg)
    rows = scalability_bench(policy, b.get("side", 512), counts, b.get("cap", 64),
                             b.get("step_limit", 256), b.get("seed", args.seed))
    out = Path(args.out)
    report(out, bench=rows)
    write_manifest(out, "bench", args, cfg)
    for r in rows:
        print(f"{r.agents} agents: isr {r.independent_success:.4f} total {r.wall_time_s:.2f}s "
              f"decision {r.decision_us:.1f}us")


def cmd_ablate(args, cfg):
    dc, tc = ddg_config(cfg), train_config(cfg)
    expert = expert_dataset(dc, args.expert_instances, EXPERT_STREAM)
    val = expert_dataset(dc, args.validation_instances, VALIDATION_STREAM)
    probes = probe_set(dc, args.probes)
    base = behaviour_clone(_params(args.params), expert, tc, args.pretrain)
    out = Path(args.out)
    res = ablation_run(base, expert, val, probes, dc, tc, args.modes.split(","), out)
    report(out, ablation=res)
    write_manifest(out, "ablate", args, cfg)
    for m, r in res.items():
        f = r.final()
        print(f"{m}: val_loss {f.val_loss:.4f} success {f.success_rate:.3f} expert_calls {r.expert_calls}")


def cmd_dump_shard(args, cfg):
    sys.stdout.write(dump_shard(args.path, args.limit, args.tokens))


def cmd_token_table(args, cfg):
    sys.stdout.write(VOCAB.table())


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddg-mapf", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, func, out=True):
        s = sub.add_parser(name)
        s.set_defaults(func=func)
        if out:
            s.add_argument("--out", required=True)
        s.add_argument("--seed", type=int, default=0)
        return s

    def with_policy(s, default="greedy"):
        s.add_argument("--policy", default=default,
                       choices=["greedy", "crowd", "random", "expert", "linear"])
        s.add_argument("--params", help="PolicyParams file for --policy linear")

    s = verb("gen-maps", cmd_gen_maps)
    s.add_argument("--kind", default="maze", choices=["maze", "random", "warehouse", "city", "empty"])
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--agents", type=int, default=32)
    s.add_argument("--side", type=int)

    s = verb("gen-expert", cmd_gen_expert)
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--validation", action="store_true", help="draw from the held-out seed stream")

    for name, f in (("ddg-run", cmd_ddg_run), ("dagger-run", cmd_dagger_run)):
        with_policy(verb(name, f), "linear")

    s = verb("train", cmd_train)
    s.add_argument("--expert", required=True, help="directory with expert shards")
    s.add_argument("--validation", help="directory with held-out expert shards")
    s.add_argument("--mode", default="ddg", choices=["plain", "ddg", "dagger"])
    s.add_argument("--params")
    s.add_argument("--pretrain", type=int, default=0, help="behaviour-cloning steps before fine-tuning")
    s.add_argument("--probes", type=int, default=0)

    s = verb("eval", cmd_eval)
    with_policy(s)
    s.add_argument("--seeds", type=int, default=10)

    with_policy(verb("bench", cmd_bench), "crowd")

    s = verb("ablate", cmd_ablate)
    s.add_argument("--params")
    s.add_argument("--modes", default="plain,dagger,ddg")
    s.add_argument("--expert-instances", type=int, default=100)
    s.add_argument("--validation-instances", type=int, default=40)
    s.add_argument("--probes", type=int, default=50)
    s.add_argument("--pretrain", type=int, default=2000)

    s = verb("dump-shard", cmd_dump_shard, out=False)
    s.add_argument("path")
    s.add_argument("--limit", type=int)
    s.add_argument("--tokens", action="store_true")

    verb("token-table", cmd_token_table, out=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        args.func(args, cfg)
    except (SpecInvalid, tomli.TOMLDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except MapfError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
