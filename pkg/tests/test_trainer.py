import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddg_mapf.dataset import Dataset, make_records
from ddg_mapf.experiments import toy_ddg_config
from ddg_mapf.grid import N_ACTIONS
from ddg_mapf.policy import FEATURE_DIM, PolicyParams, features, greedy_params, load_params
from ddg_mapf.trainer import (Batch, MixedBatchSampler, TrainConfig, fine_tune, grad, learning_rate,
                              loss, loss_and_grad, sample_mixed_batch, success_rate,
                              validation_metrics)


def rand_batch(rng, B=8):
    return Batch(rng.integers(0, 67, (B, 256)).astype(np.uint8), rng.integers(0, 5, B),
                 np.zeros(B, bool))


def rand_params(rng, scale=0.05):
    return PolicyParams(rng.normal(scale=scale, size=(FEATURE_DIM, N_ACTIONS)))


def ds(n, phase=-1, seed=0):
    rng = np.random.default_rng(seed + 10)
    return Dataset("expert" if phase < 0 else "generated", None,
                   make_records(rng.integers(0, 67, (n, 256)), rng.integers(0, 5, n), seed,
                                np.arange(n), 0, phase))


@given(st.integers(0, 10**6), st.integers(1, 20))
def test_zero_weight_loss_is_ln5(seed, B):
    b = rand_batch(np.random.default_rng(seed), B)
    assert abs(loss(PolicyParams.zeros(), b) - math.log(5)) < 1e-9


def test_loss_limits():
    rng = np.random.default_rng(0)
    b = rand_batch(rng, 1)
    p = PolicyParams.zeros()
    # first feature of the sample carries the whole score
    f0 = features(b.tokens[0])[0]
    a = int(b.actions[0])
    p.weights[f0, a] = math.log(4)  # p(a) = 4 / (4 + 4) = 0.5
    assert abs(loss(p, b) - math.log(2)) < 1e-12
    p.weights[f0, a] = 50
    assert loss(p, b) < 1e-3


def test_uniform_single_sample_gradient_closed_form():
    b = rand_batch(np.random.default_rng(1), 1)
    g = grad(PolicyParams.zeros(), b)
    f = features(b.tokens[0])
    a = int(b.actions[0])
    expect = np.zeros_like(g)
    expect[f] = 0.2
    expect[f, a] = 0.2 - 1
    assert np.allclose(g, expect, atol=1e-15)


def test_gradient_matches_finite_differences():
    eps = 1e-4
    for seed in range(5):
        rng = np.random.default_rng(seed)
        p = rand_params(rng)
        b = rand_batch(rng, 16)
        g = grad(p, b)
        active = np.unique(features(b.tokens).ravel())
        for _ in range(20):
            i, a = int(rng.choice(active)), int(rng.integers(5))
            q = p.copy()
            q.weights[i, a] += eps
            up = loss(q, b)
            q.weights[i, a] -= 2 * eps
            fd = (up - loss(q, b)) / (2 * eps)
            assert abs(fd - g[i, a]) <= 1e-5 * max(abs(g[i, a]), 1e-8) + 1e-10


@given(st.integers(0, 10**6))
def test_small_step_does_not_increase_loss(seed):
    rng = np.random.default_rng(seed)
    p, b = rand_params(rng, 0.5), rand_batch(rng)
    before, g = loss_and_grad(p, b)
    q = p.copy()
    q.weights -= 1e-4 * g
    assert loss(q, b) <= before + 1e-12
    assert before >= 0


def test_cosine_schedule():
    c = TrainConfig(lr=2.0, lr_min=0.0)
    assert learning_rate(c, 0, 100) == 2.0
    assert abs(learning_rate(c, 50, 100) - 1.0) < 1e-12
    assert learning_rate(TrainConfig(schedule="constant"), 7, 10) == 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=10, mix=0.25)
    with pytest.raises(ValueError):
        TrainConfig(schedule="adam")


def test_mixed_batch_ratio():
    cfg = TrainConfig(batch_size=64, mix=0.25, iterations=10)
    b = sample_mixed_batch(ds(100), ds(10_000, 0), cfg, np.random.default_rng(0))
    assert len(b) == 64 and b.n_generated == 16
    b = sample_mixed_batch(ds(100), Dataset(), cfg, np.random.default_rng(0))
    assert len(b) == 64 and b.n_generated == 0
    with pytest.raises(ValueError):
        sample_mixed_batch(Dataset("expert"), None, cfg, np.random.default_rng(0))


def test_generated_samples_never_repeat_within_a_phase():
    cfg = TrainConfig(batch_size=64, mix=0.25, iterations=1000)
    gen = ds(16_000, 0)
    gen.records["timestep"] = np.arange(16_000)
    s = MixedBatchSampler(ds(50), gen, cfg, np.random.default_rng(0))
    assert s.share == 16
    drawn = []
    for _ in range(1000):
        b = s.next()
        assert b.n_generated == 16
        drawn.append(s.order[s.cursor - 16 : s.cursor])
    assert len(np.unique(np.concatenate(drawn))) == 16_000
    small = MixedBatchSampler(ds(50), ds(5_000, 0), cfg, np.random.default_rng(0))
    assert small.share == 5


def test_validation_metrics():
    val = ds(40)
    loss_, sr = validation_metrics(PolicyParams.zeros(), val, [])
    assert abs(loss_ - math.log(5)) < 1e-12 and sr == 0.0
    cfg = toy_ddg_config()
    probes = [cfg.instance(cfg.instance_seed(9, j)) for j in range(10)]
    from ddg_mapf.policy import GreedyPolicy, Termination, rollout
    want = sum(rollout(GreedyPolicy(), p, 128).termination is Termination.ALL_AT_GOALS
               for p in probes) / 10
    assert success_rate(greedy_params(), probes) == want
    assert validation_metrics(greedy_params(), val, probes) == validation_metrics(greedy_params(), val, probes)


def test_fine_tune_identity_and_determinism(tmp_path):
    expert, val = ds(300), ds(50, seed=1)
    cfg = toy_ddg_config(phases=0)
    tc = TrainConfig(iterations=5, lr=0.1)
    p0 = PolicyParams.zeros()
    assert np.array_equal(fine_tune(p0, expert, cfg, tc, "plain").params.weights, p0.weights)
    cfg = toy_ddg_config(phases=2, size=100)
    a = fine_tune(p0, expert, cfg, tc, "ddg", val, [], tmp_path / "a")
    b = fine_tune(p0, expert, cfg, tc, "ddg", val, [], tmp_path / "b")
    assert np.array_equal(a.params.weights, b.params.weights)
    assert len(a.curve) == 10 and a.curve[-1].val_loss is not None
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["phase"] == 1 and man["iteration"] == 10 and "optimizer" in man
    assert np.array_equal(load_params(tmp_path / "a" / man["params"]).weights, a.params.weights)
    rows = list(csv.reader(open(tmp_path / "a" / "curve.csv")))
    assert rows[0] == ["iteration", "phase", "train_loss", "val_loss", "success_rate"] and len(rows) == 11
    with pytest.raises(ValueError):
        fine_tune(p0, expert, cfg, tc, "other")
