import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from keepalive_market.arrivals import gen_poisson
from keepalive_market.policy import (
    SIM_WINDOWS,
    ExpertLedger,
    ExpWeightsKeepAlive,
    PolicyDistribution,
    WindowSet,
    cold_start,
    cold_start_curves,
    cold_start_probability,
    expert_losses,
    ledger_at,
    ledger_trajectory,
    ledger_update,
    policy_distribution,
    policy_regret,
    sample_window,
    wasted_memory,
)

INF = math.inf
GRID = (0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)

gaps_st = st.lists(st.floats(0, 100, allow_nan=False), min_size=0, max_size=60)
theta_st = st.floats(0, 64, allow_nan=False)
window_sets = st.lists(st.integers(0, 64), min_size=2, max_size=8, unique=True).map(
    lambda w: sorted(float(v) for v in w)
)


@pytest.mark.parametrize("tau, x, cs", [(2, 2, 0), (2, 3, 1), (INF, 1e9, 0), (0, 0, 0)])
def test_cold_start(tau, x, cs):
    assert cold_start(tau, x) == cs


@pytest.mark.parametrize("tau, x, wm", [(2, 1, 1.0), (2, 3, 2.0), (INF, 5, 5.0)])
def test_wasted_memory(tau, x, wm):
    assert wasted_memory(tau, x, 1.0) == wm


def test_primitives_reject_negative_gap():
    with pytest.raises(ValueError):
        cold_start(1.0, -0.5)
    with pytest.raises(ValueError):
        wasted_memory(1.0, -0.5, 1.0)


def test_window_set_validation():
    assert WindowSet([0, 2, INF]).has_unbounded
    for bad in ([], [1, 1], [2, 1], [INF, 3], [-1, 2]):
        with pytest.raises(ValueError):
            WindowSet(bad)


def test_ledger_update_examples():
    led = ledger_update(ExpertLedger.fresh([0, INF]), 3.0)
    assert list(led.wm_cum) == [0, 3] and list(led.cs_cum) == [1, 0]
    led = ledger_update(ExpertLedger.fresh(SIM_WINDOWS), 5.0)
    assert list(led.cs_cum) == [1, 1, 1, 1, 0, 0, 0, 0]
    assert list(led.wm_cum) == [0, 1, 2, 4, 5, 5, 5, 5]
    assert led.steps == 1


def test_ledger_is_immutable_value():
    fresh = ExpertLedger.fresh([0, 4])
    after = ledger_update(fresh, 2.0)
    assert fresh == ExpertLedger.fresh([0, 4]) and after != fresh
    with pytest.raises(ValueError):
        after.wm_cum[0] = 9.0


def test_expert_losses_affine():
    led = ExpertLedger(WindowSet([0, INF]), wm_cum=[0, 3], cs_cum=[1, 0], steps=1)
    assert list(expert_losses(led, 2.0)) == [2.0, 3.0]
    assert list(expert_losses(ExpertLedger.fresh(SIM_WINDOWS), 5.0)) == [0.0] * 8


def test_fresh_ledger_is_uniform():
    p = policy_distribution(ExpertLedger.fresh(SIM_WINDOWS), 3.0).probabilities
    assert np.allclose(p, 1 / 8, atol=1e-15)


def test_two_expert_symmetric_case():
    led = ExpertLedger(WindowSet([0, INF]), steps=4, wm_cum=[0, 8.0], cs_cum=[4, 0])
    assert np.allclose(policy_distribution(led, 2.0).probabilities, [0.5, 0.5], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 180), st.floats(0, 500), theta_st, st.floats(0.1, 10))
def test_two_expert_closed_form_distribution(i, sum_x, theta, c_p):
    led = ExpertLedger(WindowSet([0, INF]), c_p=c_p, steps=i, wm_cum=[0, c_p * sum_x], cs_cum=[i, 0])
    z = i * theta - c_p * sum_x
    want = math.exp(-z) / (1 + math.exp(-z)) if z > 0 else 1 / (1 + math.exp(z))
    assert abs(policy_distribution(led, theta).probabilities[0] - want) <= 1e-10


def test_cold_start_probability_examples():
    fresh = ExpertLedger.fresh(SIM_WINDOWS)
    assert cold_start_probability(fresh, 1.0, 0.0) == 0.0
    assert cold_start_probability(fresh, 1.0, 5.0) == pytest.approx(0.5, abs=1e-15)
    finite = ledger_at([1, 2, 3], [0.5, 4.0, 2.5])
    assert cold_start_probability(finite, 7.0, 3.5) == 1.0
    # gap equal to a window length is warm for that window
    assert cold_start_probability(fresh, 1.0, 4.0) == pytest.approx(3 / 8, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(window_sets, gaps_st, st.floats(0, 70))
def test_monotone_in_report(windows, gaps, x):
    led = ledger_at(windows, gaps)
    probs = [cold_start_probability(led, t, x) for t in GRID]
    assert all(b - a <= 1e-12 for a, b in zip(probs, probs[1:]))
    assert all(0.0 <= p <= 1.0 for p in probs)


@settings(max_examples=100, deadline=None)
@given(window_sets, st.lists(st.floats(0, 1e4), min_size=8, max_size=8), st.lists(st.integers(0, 1000), min_size=8, max_size=8), theta_st)
def test_normalisation_with_large_losses(windows, wm, cs, theta):
    m = len(windows)
    led = ExpertLedger(WindowSet(windows), steps=1000, wm_cum=wm[:m], cs_cum=cs[:m])
    dist = policy_distribution(led, theta)
    assert abs(dist.probabilities.sum() - 1.0) <= 1e-12
    assert np.all(np.isfinite(dist.log_weights))


@settings(max_examples=100, deadline=None)
@given(window_sets, gaps_st)
def test_expert_ordering(windows, gaps):
    led = ledger_at(windows + [INF], gaps)
    assert np.all(np.diff(led.cs_cum) <= 0)
    assert np.all(np.diff(led.wm_cum) >= 0)


@settings(max_examples=100, deadline=None)
@given(window_sets, gaps_st, theta_st, st.floats(0.01, 100))
def test_scale_covariance(windows, gaps, theta, s):
    base = ledger_at(windows, gaps, c_p=1.0)
    scaled = ledger_at(windows, gaps, c_p=s)
    p1 = policy_distribution(base, theta, eta=1.0).probabilities
    p2 = policy_distribution(scaled, theta * s, eta=1.0 / s).probabilities
    assert np.allclose(p1, p2, rtol=1e-9, atol=1e-12)


def test_trajectory_matches_incremental_updates():
    gaps = gen_poisson(0.3, 80, 4).gaps
    wm, cs = ledger_trajectory(SIM_WINDOWS, gaps)
    led = ExpertLedger.fresh(SIM_WINDOWS)
    for i, x in enumerate(gaps, start=1):
        led = ledger_update(led, float(x))
        assert np.allclose(wm[i], led.wm_cum, rtol=1e-13) and np.array_equal(cs[i], led.cs_cum)


def test_batched_curves_match_single():
    gaps = gen_poisson(0.2, 40, 1).gaps
    wm, cs = ledger_trajectory(SIM_WINDOWS, gaps)
    curves = cold_start_curves(wm[1:], cs[1:], np.array(SIM_WINDOWS), gaps)
    k = np.arange(gaps.size)
    got = curves(k, np.full(gaps.size, 3.0))
    for i in range(gaps.size):
        led = ExpertLedger(WindowSet(SIM_WINDOWS), steps=i + 1, wm_cum=wm[i + 1], cs_cum=cs[i + 1])
        assert got[i] == pytest.approx(cold_start_probability(led, 3.0, gaps[i]), abs=1e-15)


def test_sample_window():
    point = PolicyDistribution(np.array([0.0, -np.inf, -np.inf]), 0.0, np.array([1.0, 2.0, 3.0]))
    assert all(sample_window(point, s) == 1.0 for s in range(20))
    uniform = policy_distribution(ExpertLedger.fresh([0, INF]), 1.0)
    rng = np.random.default_rng(0)
    draws = [sample_window(uniform, rng) for _ in range(100_000)]
    assert abs(np.mean(np.isinf(draws)) - 0.5) < 0.01
    a = [sample_window(uniform, np.random.default_rng(3)) for _ in range(5)]
    b = [sample_window(uniform, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


def test_policy_regret_examples():
    led = ExpertLedger.fresh([0, INF])
    dist = policy_distribution(led, 1.0).probabilities
    step_loss = dist @ (wasted_memory(led.windows, 1.0, 1.0) + 1.0 * cold_start(led.windows, 1.0))
    after = ledger_update(led, 1.0)
    assert step_loss == pytest.approx(1.0)
    assert policy_regret(after, step_loss, 0, 1.0) == pytest.approx(0.0)
    assert policy_regret(after, step_loss, 1, 1.0) == pytest.approx(0.0)
    # policy that always picks expert 1 has zero regret against it
    assert policy_regret(after, 1.0, 1, 1.0) == 0.0


def _max_per_round_regret(gaps, theta=1.0, windows=SIM_WINDOWS):
    wm, cs = ledger_trajectory(windows, gaps)
    total = 0.0
    for i, x in enumerate(gaps):
        led = ExpertLedger(WindowSet(windows), steps=i, wm_cum=wm[i], cs_cum=cs[i])
        p = policy_distribution(led, theta).probabilities
        w = np.array(windows)
        total += p @ (wasted_memory(w, x, 1.0) + theta * cold_start(w, x))
    final = ExpertLedger(WindowSet(windows), steps=len(gaps), wm_cum=wm[-1], cs_cum=cs[-1])
    return max(policy_regret(final, total, j, theta) for j in range(len(windows))) / len(gaps)


def test_per_round_regret_shrinks_with_horizon():
    short, long = [], []
    for seed in range(20):
        rate = float(np.random.default_rng(seed).uniform(0.05, 1.0))
        gaps = gen_poisson(rate, 201, seed).gaps
        short.append(_max_per_round_regret(gaps[:50]))
        long.append(_max_per_round_regret(gaps))
    assert np.median(long) <= np.median(short)


class TestEstimator:
    def test_fit_predict(self):
        gaps = gen_poisson(0.5, 100, 2).gaps
        est = ExpWeightsKeepAlive(windows=SIM_WINDOWS).fit(gaps)
        assert est.n_steps_ == 99
        assert est.ledger_ == ledger_at(SIM_WINDOWS, gaps)
        proba = est.predict_proba([0.0, 4.0])
        assert proba.shape == (2, 8) and np.allclose(proba.sum(axis=1), 1.0)
        assert est.cold_start_proba(4.0, 3.0) == cold_start_probability(est.ledger_, 4.0, 3.0)
        assert est.sample(4.0, random_state=0) in SIM_WINDOWS

    def test_partial_fit_equals_fit(self):
        gaps = gen_poisson(0.5, 60, 3).gaps
        a = ExpWeightsKeepAlive().fit(gaps)
        b = ExpWeightsKeepAlive().partial_fit(gaps[:20]).partial_fit(gaps[20:])
        assert a.ledger_ == b.ledger_

    def test_params_and_clone(self):
        est = ExpWeightsKeepAlive(c_p=2.0, eta=0.5)
        assert est.get_params() == {"windows": SIM_WINDOWS, "c_p": 2.0, "eta": 0.5}
        assert clone(est).set_params(eta=0.1).eta == 0.1

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ExpWeightsKeepAlive().predict_proba(1.0)

    def test_accepts_arrival_sequence(self):
        seq = gen_poisson(1.0, 10, 0)
        assert ExpWeightsKeepAlive().fit(seq).n_steps_ == 9
