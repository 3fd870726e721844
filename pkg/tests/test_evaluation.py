import pytest

from ddg_mapf.errors import SpecInvalid
from ddg_mapf.evaluation import (EpisodeResult, SuiteEntry, SuiteReport, SuiteSpec, bench_fields,
                                 bench_instance, episodes_csv, linear_fit, report, run_episode,
                                 run_suite, scalability_bench, summary_csv, wilson)
from ddg_mapf.distance import FieldCache
from ddg_mapf.generators import generate_instance
from ddg_mapf.policy import CrowdGreedyPolicy, ExpertPolicy, GreedyPolicy, RandomPolicy
from ddg_mapf.solvers import SolverBudget

B = SolverBudget(None, 3000)


def row(iid, kind, term, at_goal, n=4, ratio=None):
    return EpisodeResult(iid, kind, n, term, 10, at_goal, 20, 0.1, 1.0, "Solved", 20, ratio)


def test_rates_arithmetic():
    rows = [row(f"m{i}", "maze", "AllAtGoals", 4) for i in range(7)]
    rows += [row(f"m{7 + i}", "maze", "StepLimit", 2) for i in range(3)]
    rep = SuiteReport(rows)
    assert rep.success_rate == 0.7
    assert rep.independent_success_rate > rep.success_rate
    s = rep.summary()[0]
    assert s.excluded == 10 and s.mean_soc_ratio is None
    lo, hi = s.success_ci
    assert lo < 0.7 < hi


def test_self_ratio_is_one():
    inst = generate_instance("random", 5, 3, 10)
    res = run_episode(ExpertPolicy(B, seed=0), inst, 128)
    from ddg_mapf.solvers import solve
    ref = solve(inst, B, seed=0)
    assert res.success and res.soc == ref.soc


def test_run_suite_solved_and_invariants():
    spec = SuiteSpec([SuiteEntry("empty", [1, 2], range(5), side=8)], B)
    rep = run_suite(GreedyPolicy(), spec)
    assert len(rep.rows) == 10 and rep.success_rate == 1.0
    assert all(r.soc_ratio is not None and r.soc_ratio > 0 for r in rep.rows)
    ids = [r.instance_id for r in rep.rows]
    assert ids == sorted(ids)
    rep2 = run_suite(RandomPolicy(), SuiteSpec([SuiteEntry("maze", [4], range(4))], B))
    assert rep2.success_rate <= rep2.independent_success_rate


def test_suite_validation():
    with pytest.raises(SpecInvalid):
        run_suite(GreedyPolicy(), SuiteSpec([]))
    with pytest.raises(SpecInvalid):
        run_suite(GreedyPolicy(), SuiteSpec([SuiteEntry("tundra", [4], [0])]))
    with pytest.raises(SpecInvalid):
        run_suite(GreedyPolicy(), SuiteSpec([SuiteEntry("maze", [0], [0])]))
    assert SuiteEntry("city", [4], [0]).limit() == 256 and SuiteEntry("maze", [4], [0]).limit() == 128


def test_report_files(tmp_path):
    rep = SuiteReport([row("b", "random", "AllAtGoals", 4, ratio=1.1),
                       row("a", "maze", "StepLimit", 1, ratio=0.9)])
    report(tmp_path / "x", suite=rep)
    report(tmp_path / "y", suite=rep)
    for name in ("episodes.csv", "summary.csv", "report.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
    summary = (tmp_path / "x" / "summary.csv").read_text().splitlines()
    assert [ln.split(",")[0] for ln in summary[1:]] == ["maze", "random"]
    empty = episodes_csv(SuiteReport([]))
    assert empty.count("\n") == 1 and empty.startswith("instance_id,")
    assert summary_csv(SuiteReport([])).count("\n") == 1


def test_bench_small():
    rows = scalability_bench(CrowdGreedyPolicy(), 64, [32, 64, 128], cap=16, step_limit=128)
    assert [r.agents for r in rows] == [32, 64, 128]
    assert all(r.independent_success >= 0.95 for r in rows)
    with pytest.raises(SpecInvalid):
        scalability_bench(GreedyPolicy(), 64, [8], cap=0)


def test_windowed_bench_fields_exact():
    inst = bench_instance(40, 20, 10, 0)
    for f, s, g in zip(bench_fields(inst, 3, FieldCache()), inst.starts, inst.goals):
        assert f.value(s) == abs(s[0] - g[0]) + abs(s[1] - g[1])


def test_linear_fit_and_wilson():
    s, i, r2 = linear_fit([1, 2, 3], [2, 4, 6])
    assert abs(s - 2) < 1e-12 and abs(r2 - 1) < 1e-12
    assert wilson(0, 0) == (0.0, 0.0)
    lo, hi = wilson(5, 10)
    assert 0 < lo < 0.5 < hi < 1
