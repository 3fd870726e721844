"""Benchmark suite (mazes, random, warehouse, city) for a parameter-free or trained policy.

    python3 scripts/run_suite.py --policy crowd --seeds 5 --out runs/suite
"""

import argparse

from ddg_mapf.evaluation import default_suite, report, run_suite
from ddg_mapf.policy import CrowdGreedyPolicy, GreedyPolicy, LinearPolicy, RandomPolicy, load_params

POLICIES = {"greedy": GreedyPolicy, "crowd": CrowdGreedyPolicy, "random": RandomPolicy}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--policy", default="crowd", choices=[*POLICIES, "linear"])
    ap.add_argument("--params", help="params file for --policy linear")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="runs/suite")
    args = ap.parse_args()

    if args.policy == "linear":
        policy = LinearPolicy(load_params(args.params))
    else:
        policy = POLICIES[args.policy]()
    rep = run_suite(policy, default_suite(range(args.seeds)))
    for s in rep.summary():
        ratio = "n/a" if s.mean_soc_ratio is None else f"{s.mean_soc_ratio:.3f}"
        print(f"{s.map_kind:10s} episodes {s.episodes:3d}  SR {s.success_rate:.3f}  "
              f"ISR {s.independent_success_rate:.3f}  SoC ratio {ratio}")
    report(args.out, suite=rep)


if __name__ == "__main__":
    main()
