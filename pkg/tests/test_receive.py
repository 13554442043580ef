import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airfl.receive import (feasible_rescale, optimal_receive_scalar, receive_vector,
                           sca_refine_receive, sdr_receive_vector)

from conftest import crandn


def mc_oracle(h, rng, samples=20000):
    u = crandn(rng, h.shape[1], samples)
    g = np.abs(h.conj() @ u).min(axis=0)
    return float(np.min(np.sum(np.abs(u) ** 2, axis=0) / g ** 2))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10 ** 6))
def test_scalar_closed_form(K, seed):
    h = crandn(np.random.default_rng(seed), K)
    a = optimal_receive_scalar(h)
    assert a * np.abs(h).min() == pytest.approx(1.0, rel=1e-15)
    assert np.all(a * np.abs(h) >= 1 - 1e-15)


def test_scalar_errors():
    with pytest.raises(ValueError):
        optimal_receive_scalar([])
    with pytest.raises(ValueError, match="device"):
        optimal_receive_scalar([1.0, 0.0])


def test_rescale():
    h = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=complex)
    a = feasible_rescale(np.array([1.0, 1.0], dtype=complex), h)
    assert np.abs(h @ a.conj()).min() == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(8))
def test_sdr_pipeline(seed):
    r = np.random.default_rng(seed)
    K = 1 + seed % 3
    h = crandn(r, K, 2)
    res = receive_vector(h, rng=r)
    norm = np.vdot(res.a, res.a).real
    assert np.abs(h @ res.a.conj()).min() >= 1 - 1e-9
    assert res.sdr_lower_bound <= norm * (1 + 1e-6)
    assert np.all(np.diff(res.norms) <= 1e-12)
    assert norm == pytest.approx(mc_oracle(h, r), rel=0.05)


def test_single_user_is_matched_filter(rng):
    h = crandn(rng, 1, 3)
    res = receive_vector(h, rng=rng)
    assert res.rank_one
    assert np.vdot(res.a, res.a).real == pytest.approx(1 / np.vdot(h, h).real, rel=1e-4)


def test_sca_monotone_and_feasible(rng):
    h = crandn(rng, 4, 3)
    a0 = feasible_rescale(crandn(rng, 3), h)
    a, norms = sca_refine_receive(a0, h)
    assert np.all(np.diff(norms) <= 1e-12)
    assert np.abs(h @ a.conj()).min() >= 1 - 1e-7


def test_sca_rejects_infeasible_start(rng):
    h = crandn(rng, 2, 2)
    with pytest.raises(ValueError):
        sca_refine_receive(1e-6 * np.ones(2, complex), h)


def test_sdr_scalar_shortcut():
    h = np.array([[2.0 + 0j], [0.5 + 0j]])
    A, a, info = sdr_receive_vector(h)
    assert info["rank_one"] and abs(a[0]) == pytest.approx(2.0)
