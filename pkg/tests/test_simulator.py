import math

import numpy as np
import pytest

from ngcodes.latency import ClusterParams, InvalidParams, Scheme, gc_latency_cdf, ngc_latency_cdf, task_time_cdf
from ngcodes.simulator import (
    run_experiment,
    sample_worker_trace,
    simulate_gc_iteration,
    simulate_ngc_iteration,
    trial_rng,
)

FIG_PARAMS = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.05, n=8)


def dkw_band(trials, confidence=0.99):
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))


def test_trial_rng_streams_are_reproducible():
    first = trial_rng(42, 7).random(4)
    again = trial_rng(42, 7).random(4)
    other = trial_rng(42, 8).random(4)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_trace_always_fails_at_pe_one():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=1.0, n=4)
    trace = sample_worker_trace(np.random.default_rng(0), p, 3)
    assert trace.failed and trace.finish_times.size == 0


def test_trace_reduces_to_deterministic_shift():
    p = ClusterParams(lam=1e9, rho=0.5, gamma=0.2, eps=0.1, p_e=0.0, n=4)
    trace = sample_worker_trace(np.random.default_rng(1), p, 4)
    expected = p.gamma + p.eps + p.rho * np.arange(1, 5)
    assert np.allclose(trace.finish_times, expected, atol=1e-5)


def test_trace_is_increasing_and_shift_bounded():
    rng = np.random.default_rng(2)
    for _ in range(200):
        trace = sample_worker_trace(rng, FIG_PARAMS, 5)
        if trace.failed:
            continue
        assert np.all(np.diff(trace.finish_times) > 0)
        lower = FIG_PARAMS.gamma + FIG_PARAMS.eps + FIG_PARAMS.rho * np.arange(1, 6)
        assert np.all(trace.finish_times >= lower)


def test_trace_rejects_bad_u_max():
    with pytest.raises(InvalidParams):
        sample_worker_trace(np.random.default_rng(0), FIG_PARAMS, 0)


def test_trace_empirical_cdf_matches_analytic():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.0, n=4)
    rng = np.random.default_rng(3)
    trials = 1_000_000
    samples = np.empty(trials)
    for i in range(trials):
        samples[i] = sample_worker_trace(rng, p, 1).finish_times[0]
    samples.sort()
    ts = np.linspace(0.5, 12.0, 60)
    empirical = np.searchsorted(samples, ts, side="right") / trials
    analytic = np.array([task_time_cdf(1, t, p) for t in ts])
    assert np.abs(empirical - analytic).max() <= dkw_band(trials)


def test_ngc_with_zero_tolerance_waits_for_everyone():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.0, n=8)
    for seed in range(20):
        outcome = simulate_ngc_iteration(np.random.default_rng(seed), 0, p)
        replay = np.random.default_rng(seed)
        times = [sample_worker_trace(replay, p, 1).finish_times[0] for _ in range(8)]
        assert outcome.latency == pytest.approx(max(times))
        assert outcome.decoded_sigma == 0


def test_ngc_undecodable_when_all_fail():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=1.0, n=8)
    outcome = simulate_ngc_iteration(np.random.default_rng(0), 3, p)
    assert outcome.latency is None and outcome.decoded_sigma is None
    assert outcome.kappa == 8
    assert np.all(outcome.tasks_done == 0)


def test_ngc_quorum_and_no_earlier_layer():
    p = FIG_PARAMS
    s_max = 3
    for seed in range(500):
        outcome = simulate_ngc_iteration(np.random.default_rng(seed), s_max, p)
        if outcome.latency is None:
            assert outcome.kappa > s_max
            continue
        sigma = outcome.decoded_sigma
        assert 0 <= sigma <= s_max
        assert np.sum(outcome.tasks_done >= sigma + 1) >= p.n - sigma
        assert np.all(outcome.tasks_done <= s_max + 1)
        # replay the identical stream to inspect raw traces
        rng = np.random.default_rng(seed)
        traces = [sample_worker_trace(rng, p, s_max + 1) for _ in range(p.n)]
        for u in range(1, sigma + 1):  # u < sigma + 1
            strictly_before = sum(
                1 for tr in traces if not tr.failed and tr.finish_times[u - 1] < outcome.latency
            )
            assert strictly_before < p.n - u + 1
        for i, tr in enumerate(traces):
            expected = 0 if tr.failed else int(np.searchsorted(tr.finish_times, outcome.latency, side="right"))
            assert outcome.tasks_done[i] == expected


def test_gc_fixed_load_and_order_statistic():
    p = FIG_PARAMS
    for seed in range(200):
        outcome = simulate_gc_iteration(np.random.default_rng(seed), 3, p)
        alive = outcome.tasks_done > 0
        assert np.all(outcome.tasks_done[alive] == 4)
        if outcome.latency is None:
            assert outcome.kappa > 3
            continue
        rng = np.random.default_rng(seed)
        traces = [sample_worker_trace(rng, p, 4) for _ in range(p.n)]
        finals = sorted(tr.finish_times[-1] for tr in traces if not tr.failed)
        assert outcome.latency == pytest.approx(finals[p.n - 3 - 1])


def test_gc_and_ngc_agree_at_zero_tolerance():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.0, n=8)
    for seed in range(50):
        a = simulate_gc_iteration(np.random.default_rng(seed), 0, p)
        b = simulate_ngc_iteration(np.random.default_rng(seed), 0, p)
        assert a.latency == pytest.approx(b.latency)


def test_ngc_never_slower_than_gc_on_shared_draws():
    p = FIG_PARAMS
    for seed in range(2000):
        gc_out = simulate_gc_iteration(np.random.default_rng(seed), 3, p)
        ngc_out = simulate_ngc_iteration(np.random.default_rng(seed), 3, p)
        if gc_out.latency is None:
            assert ngc_out.latency is None
            continue
        assert ngc_out.latency <= gc_out.latency + 1e-12


def test_final_signal_delay_is_additive():
    p = FIG_PARAMS
    base = simulate_ngc_iteration(np.random.default_rng(7), 3, p)
    shifted = simulate_ngc_iteration(np.random.default_rng(7), 3, p, final_signal_delay=0.25)
    assert shifted.latency == pytest.approx(base.latency + 0.25)
    assert np.array_equal(shifted.tasks_done, base.tasks_done)


def test_run_experiment_single_trial_is_step_function():
    grid = np.linspace(2.0, 18.0, 40)
    result = run_experiment(Scheme("ngc", 3), 1, 5, FIG_PARAMS, grid)
    assert set(np.unique(result.curve.values)) <= {0.0, 1.0}
    assert np.all(np.diff(result.curve.values) >= 0.0)


def test_run_experiment_deterministic():
    grid = np.linspace(2.0, 18.0, 25)
    a = run_experiment(Scheme("gc", 2), 500, 9, FIG_PARAMS, grid)
    b = run_experiment(Scheme("gc", 2), 500, 9, FIG_PARAMS, grid)
    assert np.array_equal(a.curve.values, b.curve.values)
    assert a.loads == b.loads


def test_run_experiment_matches_analytic_gc():
    grid = np.linspace(2.0, 18.0, 50)
    trials = 20_000
    result = run_experiment(Scheme("gc", 2), trials, 13, FIG_PARAMS, grid)
    analytic = np.array([gc_latency_cdf(t, 2, FIG_PARAMS) for t in grid])
    assert np.abs(result.curve.values - analytic).max() <= dkw_band(trials)


def test_run_experiment_matches_analytic_ngc():
    grid = np.linspace(2.0, 18.0, 50)
    trials = 20_000
    result = run_experiment(Scheme("ngc", 3), trials, 14, FIG_PARAMS, grid)
    analytic = np.array([ngc_latency_cdf(t, 3, FIG_PARAMS) for t in grid])
    assert np.abs(result.curve.values - analytic).max() <= dkw_band(trials)


def test_empirical_ngc_curve_dominates_empirical_gc_curve():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.0, p_e=0.05, n=8)
    grid = np.linspace(2.0, 18.0, 50)
    ngc = run_experiment(Scheme("ngc", 3), 5000, 31, p, grid)
    gc = run_experiment(Scheme("gc", 3), 5000, 31, p, grid)
    assert np.all(ngc.curve.values >= gc.curve.values - 0.01)


def test_flexible_load_stays_below_fixed_load():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.0, n=8)
    grid = np.linspace(2.0, 18.0, 10)
    result = run_experiment(Scheme("ngc", 3), 20_000, 21, p, grid)
    assert 1.0 <= result.loads.mean_load < 4.0
    assert result.loads.undecodable_rate == 0.0


def test_undecodable_rate_matches_binomial_tail():
    p = ClusterParams(lam=0.5, rho=0.5, gamma=0.0, eps=0.1, p_e=0.3, n=8)
    trials = 20_000
    grid = np.linspace(2.0, 18.0, 10)
    result = run_experiment(Scheme("gc", 1), trials, 3, p, grid)
    tail = sum(math.comb(8, k) * 0.3**k * 0.7 ** (8 - k) for k in range(2, 9))
    margin = 4.0 * math.sqrt(tail * (1.0 - tail) / trials)
    assert abs(result.loads.undecodable_rate - tail) <= margin
