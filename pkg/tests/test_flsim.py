import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airfl.config import SystemConfig
from airfl.flsim import (SCHEMES, LifetimeModel, centralized_fit, device_data, holdout_set,
                         network_lifetime, rounds_to_target, run_logistic_fl, run_regression_fl,
                         scheme_channels, solve_stats, sufficient_stats, sweep_experiment,
                         test_error as mse_error)

CFG = SystemConfig(seed=4)


def test_test_error_examples():
    x = np.linspace(0, 1, 11)
    assert mse_error((-3.0, 2.0), (x, -3 * x + 2)) == 0.0
    assert mse_error((0.0, 0.0), (x, np.full(11, 2.0))) == 4.0
    r = np.random.default_rng(0)
    m, xs, ys = r.standard_normal(2), r.standard_normal(7), r.standard_normal(7)
    loop = sum((ys[i] - (m[0] * xs[i] + m[1])) ** 2 for i in range(7)) / 7
    assert mse_error(m, (xs, ys)) == pytest.approx(loop, rel=1e-14)
    with pytest.raises(ValueError):
        mse_error(m, (np.array([]), np.array([])))


def test_sufficient_stats_solve():
    x, y = device_data(0, 0, 1)
    X = np.column_stack([x, np.ones_like(x)])
    ref = np.linalg.lstsq(X, y, rcond=None)[0]
    np.testing.assert_allclose(solve_stats(sufficient_stats(x, y), x.size), ref, atol=1e-12)


def test_lifetime_examples():
    assert network_lifetime(6, 3, 0.5, 100) == 133
    assert network_lifetime(6, 2, 0.0, 100) == 100
    assert network_lifetime(6, 6, 0.7, 100) == 100
    assert LifetimeModel(100, 0.5).lifetime(6, 3) == 133
    for bad in [(6, 7, 0.5, 100), (6, 0, 0.5, 100), (6, 3, 1.5, 100), (6, 3, 0.5, 0)]:
        with pytest.raises(ValueError):
            network_lifetime(*bad)
    with pytest.raises(TypeError):
        network_lifetime(6.0, 3, 0.5, 100)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30), st.data(), st.fractions(0, 1, max_denominator=20), st.integers(1, 500))
def test_lifetime_exact(N, data, lc, delta):
    K = data.draw(st.integers(1, N))
    exact = (N * delta) // (N - lc * N + lc * K)
    assert network_lifetime(N, K, lc, delta) == exact


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.floats(0.0, 1.0), st.integers(1, 200))
def test_lifetime_monotone_in_lambda(N, lc, delta):
    K = N // 2
    assert network_lifetime(N, K, lc, delta) <= network_lifetime(N, K, min(1.0, lc + 0.1), delta)


def test_scheme_channels_share_direct():
    chans = {s: scheme_channels(CFG, s) for s in SCHEMES}
    for s in SCHEMES:
        np.testing.assert_array_equal(chans[s].direct, chans["multi-RIS"].direct)
    assert chans["no-RIS"].num_elements == 0
    assert chans["single-RIS"].num_ris == 1 and chans["single-RIS"].num_elements == 180
    with pytest.raises(ValueError):
        scheme_channels(CFG, "bogus")


def test_invalid_scheme_and_rounds():
    with pytest.raises(ValueError):
        run_regression_fl(CFG, "multi-AF")
    with pytest.raises(ValueError):
        run_regression_fl(CFG, "optimal", rounds=0)


def test_optimal_recovers_line():
    tr = run_regression_fl(CFG, "optimal", rounds=50)
    assert abs(tr.model[0] + 3) < 0.1 and abs(tr.model[1] - 2) < 0.1
    assert [r["round"] for r in tr.rounds] == list(range(1, 51))
    assert all(r["training_loss"] >= 0 and r["test_error"] >= 0 for r in tr.rounds)


@pytest.mark.parametrize("scheme", ["multi-RIS", "no-RIS"])
def test_zero_noise_is_centralized(scheme):
    tr = run_regression_fl(CFG, scheme, rounds=4, noise=False)
    np.testing.assert_allclose(tr.model, centralized_fit(CFG.seed, tr.selected, 4), atol=1e-10)
    one = run_regression_fl(CFG, scheme, rounds=3, noise=False, accumulate=False)
    np.testing.assert_allclose(one.model, centralized_fit(CFG.seed, one.selected, [3]), atol=1e-10)


def test_trace_mse_matches_closed_form():
    from airfl.aircomp import reduced_mse
    from airfl.channel import combined_channel
    from airfl.flsim import optimize_scheme
    tr = run_regression_fl(CFG, "single-RIS", rounds=1)
    ch, (state, phases, sel, _) = optimize_scheme(CFG, "single-RIS")
    hb = combined_channel(ch, phases)[list(sel.selected)]
    assert tr.mse == pytest.approx(reduced_mse(state.a, hb, CFG.max_power, CFG.noise_power), rel=1e-9)


def test_paired_data_across_schemes():
    a = run_regression_fl(CFG, "multi-RIS", rounds=2, noise=False)
    b = run_regression_fl(CFG, "random-RIS", rounds=2, noise=False)
    if a.selected == b.selected:
        np.testing.assert_allclose(a.model, b.model, atol=1e-12)


def test_holdout_fixed_per_seed():
    np.testing.assert_array_equal(holdout_set(3)[0], holdout_set(3)[0])
    assert holdout_set(3)[0].size == 1000


def test_rounds_to_target():
    tr = run_regression_fl(CFG, "optimal", rounds=5)
    assert rounds_to_target(tr, np.inf) == 1
    assert rounds_to_target(tr, -1.0) == 6


def test_sweep_lambda_and_validation():
    rows, table = sweep_experiment(SystemConfig(num_devices=3, elements_per_ris=4), "lambda_c",
                                   [0.0, 0.5, 1.0], 1, rounds=2)
    life = [t["lifetime"] for t in table]
    assert life == sorted(life)
    with pytest.raises(ValueError):
        sweep_experiment(CFG, "gamma", [1], 1)
    with pytest.raises(ValueError):
        sweep_experiment(CFG, "K", [9], 1, rounds=1)


def test_logistic_task_learns():
    tr = run_logistic_fl(SystemConfig(seed=1, num_devices=3, elements_per_ris=8), "optimal",
                         rounds=5, dim=64)
    assert tr.model.shape == (65,)
    assert tr.rounds[-1]["test_error"] < 0.15
