"""Toy plain / DAgger / DDG comparison from one behaviour-cloned base.

    python3 scripts/run_toy_ablation.py --out runs/toy [--modes plain,ddg]
"""

import argparse
import time

from ddg_mapf.evaluation import ablation_run, report
from ddg_mapf.experiments import ToySetup, prepare, random_success


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--modes", default="plain,dagger,ddg")
    args = ap.parse_args()

    t0 = time.perf_counter()
    setup = ToySetup()
    prep = prepare(setup)
    print(f"prepared D_e={len(prep.expert)} val={len(prep.validation)} in {time.perf_counter() - t0:.0f}s")
    res = ablation_run(prep.base, prep.expert, prep.validation, prep.probes, setup.ddg,
                       setup.train, args.modes.split(","), args.out)
    report(args.out, ablation=res)
    print(f"random policy success {random_success(prep.probes):.2f}")
    for mode, r in res.items():
        f = r.final()
        print(f"{mode:7s} val_loss {f.val_loss:.4f} success {f.success_rate:.2f} "
              f"expert_calls {r.expert_calls}")
    print(f"total {time.perf_counter() - t0:.0f}s, curves in {args.out}")


if __name__ == "__main__":
    main()
