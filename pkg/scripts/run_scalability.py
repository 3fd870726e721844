"""Large empty-map throughput: total time and per-agent decision time vs agent count.

    python3 scripts/run_scalability.py --counts 1024,4096,16384 --out runs/bench
"""

import argparse

from ddg_mapf.evaluation import linear_fit, report, scalability_bench
from ddg_mapf.policy import CrowdGreedyPolicy


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--side", type=int, default=512)
    ap.add_argument("--counts", default="1024,4096,16384")
    ap.add_argument("--cap", type=int, default=64)
    ap.add_argument("--out", default="runs/bench")
    args = ap.parse_args()

    counts = [int(c) for c in args.counts.split(",")]
    rows = scalability_bench(CrowdGreedyPolicy(), args.side, counts, cap=args.cap)
    for r in rows:
        print(f"{r.agents:6d} agents  {r.termination:12s} steps {r.steps:4d}  ISR {r.independent_success:.4f}  "
              f"total {r.wall_time_s:7.2f}s  fields {r.field_time_s:6.2f}s  decision {r.decision_us:.2f}us")
    if len(rows) > 1:
        slope, _, r2 = linear_fit([r.agents for r in rows], [r.wall_time_s for r in rows])
        print(f"time per agent {slope * 1e3:.3f} ms, R^2 {r2:.4f}")
    report(args.out, bench=rows)


if __name__ == "__main__":
    main()
