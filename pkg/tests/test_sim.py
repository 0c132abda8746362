import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmaccess.codebook import codebook
from rmaccess.detector import DetectorConfig
from rmaccess.sim import (
    ChannelModel,
    ExperimentConfig,
    TrialOutcome,
    build_received_signal,
    collision_rate_formula,
    count_collided,
    draw_active_set,
    draw_active_sets,
    run_experiment,
    score_trial,
)

from oracles import collision_oracle


def test_channel_model():
    assert ChannelModel().kind == "flat-rayleigh"
    assert ChannelModel("awgn", math.inf).noise_variance(5) == 0.0
    assert ChannelModel("awgn", 0.0).noise_variance(5) == pytest.approx(1 / 32)
    for kw in [dict(kind="rician"), dict(snr_db=math.nan), dict(snr_db=-math.inf)]:
        with pytest.raises(ValueError):
            ChannelModel(**kw)


def test_formula_examples():
    assert collision_rate_formula(1, 52) == 0
    assert collision_rate_formula(1, 1) == 0
    assert collision_rate_formula(3, 1) == 1
    assert round(collision_rate_formula(2, 52), 4) == 0.0192
    assert float(f"{collision_rate_formula(6, 16000):.1g}") == 3e-4
    with pytest.raises(ValueError):
        collision_rate_formula(0, 5)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30), st.integers(1, 10 ** 6))
def test_formula_matches_binomial_sum(k, C):
    assert collision_rate_formula(k, C) == pytest.approx(collision_oracle(k, C), rel=1e-12, abs=1e-300)


def test_formula_huge_space():
    C = 2 ** 60
    # first-order expansion (k-1)/C, accurate to ~k^2/C^2
    assert collision_rate_formula(10, C) == pytest.approx(9 / C, rel=1e-12)


def test_draws():
    assert draw_active_set(3, 1, np.random.default_rng(0)) == [0, 0, 0]
    a = draw_active_set(10, 1000, np.random.default_rng(5))
    b = draw_active_set(10, 1000, np.random.default_rng(5))
    assert a == b and all(0 <= i < 1000 for i in a)
    ids = draw_active_sets(4, 6, 52, np.random.default_rng(1))
    assert ids.shape == (4, 6)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=8))
def test_count_collided_matches_definition(ids):
    expect = sum(1 for i in ids if ids.count(i) > 1)
    assert count_collided(np.array([ids]))[0] == expect
    assert score_trial(ids, []).collided_users == expect


def test_score_trial_examples():
    o = score_trial([3, 3], [3])
    assert (o.collided_users, o.missed_users, o.total_failures) == (2, 0, 2)
    assert score_trial([1, 2], [1, 2]) == TrialOutcome(0, 0, 0)
    o = score_trial([1, 2], [1, 7])
    assert (o.missed_users, o.false_alarms, o.total_failures) == (1, 1, 1)
    assert TrialOutcome(2, 1, 0).total_failures == 3


def test_received_signal_superposition():
    cb = codebook(5, 0, 1024)
    ch = ChannelModel("flat-rayleigh", math.inf)
    y, h = build_received_signal([77], cb, ch, np.random.default_rng(0))
    assert np.array_equal(y, h[0] * cb.sequence(77))
    y, h = build_received_signal([9, 9], cb, ch, np.random.default_rng(1))
    assert np.allclose(y, (h[0] + h[1]) * cb.sequence(9), atol=1e-15)
    y, h = build_received_signal([4, 500], cb, ChannelModel("awgn", math.inf), np.random.default_rng(2))
    assert np.array_equal(h, [1, 1])


@pytest.mark.parametrize("kind", ["awgn", "flat-rayleigh"])
def test_measured_snr(kind):
    m, snr = 5, 7.0
    cb = codebook(m, 0, 1024)
    ch = ChannelModel(kind, snr)
    rng = np.random.default_rng(3)
    sig = noise = 0.0
    s = cb.sequence(100)
    for _ in range(10000):
        y, h = build_received_signal([100], cb, ch, rng)
        clean = h[0] * s
        sig += np.sum(np.abs(clean) ** 2)
        noise += np.sum(np.abs(y - clean) ** 2)
    assert abs(10 * np.log10(sig / noise) - snr) <= 0.2


def test_experiment_config():
    cfg = ExperimentConfig(m=7, C=2 ** 21, k=5)
    assert cfg.r == 1 and cfg.detector.k == 5
    cfg = ExperimentConfig(m=7, C=128, k=4, detector=DetectorConfig(k=1, p_max=2))
    assert cfg.detector.k == 4 and cfg.detector.p_max == 2
    with pytest.raises(ValueError):
        ExperimentConfig(m=7, C=2 ** 15, k=5, r=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m=7, C=128, k=0)
    with pytest.raises(ValueError):
        ExperimentConfig(m=7, C=128, k=2, trials=0)


def test_level1_noiseless_misses_only_from_collisions():
    cfg = ExperimentConfig(m=5, C=32, k=2, channel=ChannelModel("flat-rayleigh", math.inf),
                           trials=300, seed=9)
    res = run_experiment(cfg)
    assert res.miss_rate == 0
    assert res.collision_rate > 0


def test_collision_rate_consistent_with_formula():
    cfg = ExperimentConfig(m=3, C=64, k=6, channel=ChannelModel("awgn", 20.0), trials=600, seed=2)
    res = run_experiment(cfg)
    assert abs(res.collision_rate - collision_rate_formula(6, 64)) <= 3 * res.collision_se


def test_per_trial_accounting():
    cfg = ExperimentConfig(m=5, C=1024, k=4, channel=ChannelModel("flat-rayleigh", 3.0), trials=60, seed=4)
    res = run_experiment(cfg)
    col, miss, fa = res.per_trial.T
    assert np.all(col + miss <= cfg.k)
    assert np.all(col != 1)
    assert res.failure_rate == pytest.approx(res.collision_rate + res.miss_rate)


def test_deterministic_and_schedule_independent():
    cfg = ExperimentConfig(m=5, C=1024, k=3, channel=ChannelModel("flat-rayleigh", 5.0), trials=40, seed=11)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    c = run_experiment(cfg, threads=2)
    assert a.metrics() == b.metrics() == c.metrics()
    assert np.array_equal(a.per_trial, c.per_trial)
    d = run_experiment(ExperimentConfig(m=5, C=1024, k=3, channel=ChannelModel("flat-rayleigh", 5.0),
                                        trials=40, seed=12))
    assert not np.array_equal(a.per_trial, d.per_trial)


def test_collisions_independent_of_channel():
    base = dict(m=5, C=40, k=5, trials=50, seed=6)
    a = run_experiment(ExperimentConfig(channel=ChannelModel("awgn", 30.0), **base))
    b = run_experiment(ExperimentConfig(channel=ChannelModel("flat-rayleigh", 0.0), **base))
    assert np.array_equal(a.per_trial[:, 0], b.per_trial[:, 0])


def test_result_dict():
    cfg = ExperimentConfig(m=5, C=64, k=2, trials=3)
    d = run_experiment(cfg).to_dict()
    assert d["config"]["m"] == 5 and d["config"]["detector"]["k"] == 2
    assert set(d["metrics"]) == {
        "trials", "collision_rate", "collision_se", "miss_rate", "miss_se",
        "false_alarm_rate", "false_alarm_se", "failure_rate", "failure_se",
    }


def test_miss_rate_growth_guard_7db():
    # frozen guard: widening C from 2^m to 2^(2m) may at most triple the miss rate
    base = dict(m=7, k=5, channel=ChannelModel("flat-rayleigh", 7.0), trials=1000, seed=21)
    narrow = run_experiment(ExperimentConfig(C=1 << 7, **base))
    wide = run_experiment(ExperimentConfig(C=1 << 14, **base))
    assert wide.miss_rate <= 3 * narrow.miss_rate, (narrow.miss_rate, wide.miss_rate)
