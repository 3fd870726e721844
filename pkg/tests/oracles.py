"""Independent reference computations used by several test modules."""

import math

from ddg_mapf.solvers import solve


def straight_line_select(rollout_states, instance, h, budget, delta_min, fields):
    """Candidate extraction, suffix solving, deltas and thresholded argmax written out longhand.

    Returns (timesteps, costs, deltas, z or None).
    """
    T = len(rollout_states) - 1
    ts = []
    t = 0
    while t < T:
        ts.append(t)
        t += h
    costs = []
    for t in ts:
        out = solve(instance.with_starts(rollout_states[t].positions), budget,
                    seed=instance.seed, fields=fields)
        costs.append(out.soc if out.solved else None)
    if len(ts) < 2:
        return ts, costs, [], None
    deltas = []
    for i in range(len(ts) - 1):
        if costs[i] is None:
            deltas.append(None)
        elif costs[i + 1] is None:
            deltas.append(math.inf)
        else:
            deltas.append(costs[i + 1] - costs[i])
    z, best = None, -math.inf
    for i, d in enumerate(deltas):
        if d is not None and d > best:
            z, best = i, d
    if z is None or not best > delta_min:
        z = None
    return ts, costs, deltas, z
