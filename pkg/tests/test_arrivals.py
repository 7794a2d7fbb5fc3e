import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from keepalive_market.arrivals import (
    ArrivalSequence,
    HawkesParams,
    compensator,
    gen_hawkes,
    gen_poisson,
    intensity,
    rescaled_gaps,
    run_rng,
)


def test_poisson_zero_count_is_empty():
    seq = gen_poisson(1.0, 0, 7)
    assert len(seq) == 0 and seq.gaps.size == 0


def test_poisson_mean_gap():
    seq = gen_poisson(1.0, 10_000, 1)
    assert abs(np.diff(seq.times).mean() - 1.0) < 0.05


@pytest.mark.parametrize("rate", [0.0, -1.0])
def test_poisson_rejects_bad_rate(rate):
    with pytest.raises(ValueError):
        gen_poisson(rate, 5, 0)


def test_poisson_uniform_rate_draw_is_valid():
    rate = float(np.random.default_rng(3).uniform(0, 1))
    seq = gen_poisson(rate, 200, 3)
    assert len(seq) == 200 and np.all(np.diff(seq.times) > 0) and seq.times[0] > 0


def test_generators_deterministic():
    p = HawkesParams(0.5, 1.0, 2.0)
    assert gen_hawkes(p, 300, 11) == gen_hawkes(p, 300, 11)
    assert gen_hawkes(p, 300, 11) != gen_hawkes(p, 300, 12)
    assert gen_poisson(0.3, 50, 4) == gen_poisson(0.3, 50, 4)


def test_hawkes_rejects_zero_count():
    with pytest.raises(ValueError):
        gen_hawkes(HawkesParams(1.0, 0.5, 1.0), 0, 0)


@pytest.mark.parametrize("kw", [dict(lambda0=0.0), dict(beta=0.0), dict(alpha=-0.1), dict(lambda0=float("nan"))])
def test_hawkes_params_validation(kw):
    base = dict(lambda0=1.0, alpha=0.5, beta=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        HawkesParams(**base)


def test_hawkes_alpha_zero_matches_poisson_in_distribution():
    h = gen_hawkes(HawkesParams(1.0, 0.0, 1.0), 5000, 2)
    p = gen_poisson(1.0, 5000, 9)
    assert stats.ks_2samp(np.diff(h.times), np.diff(p.times)).pvalue > 0.01


def test_hawkes_time_rescaling_single_seed():
    params = HawkesParams(0.4, 1.2, 2.0)
    seq = gen_hawkes(params, 5000, 5)
    assert stats.kstest(rescaled_gaps(params, seq), "expon").pvalue > 0.01


def test_hawkes_explosive_params_still_return_count():
    seq = gen_hawkes(HawkesParams(0.5, 3.0, 1.0), 200, 0)
    assert len(seq) == 200 and np.all(np.diff(seq.times) > 0)


def test_rescaled_gaps_match_compensator_differences():
    params = HawkesParams(0.7, 0.9, 1.5)
    seq = gen_hawkes(params, 60, 3)
    lam = [compensator(params, seq, t) for t in seq.times]
    expected = np.diff(np.concatenate([[0.0], lam]))
    assert np.allclose(rescaled_gaps(params, seq), expected, rtol=1e-10, atol=1e-12)


def test_intensity_and_compensator_edge_cases():
    p = HawkesParams(0.5, 1.0, 2.0)
    assert intensity(p, [], 3.0) == 0.5
    assert intensity(p, [1.0], 1.0) == pytest.approx(1.5)
    assert compensator(p, [1.0, 2.0], float("inf")) == float("inf")
    assert compensator(p, [], 2.0) == pytest.approx(1.0)


def test_arrival_sequence_invariants():
    seq = ArrivalSequence([1.0, 1.0, 3.5])
    assert list(seq.gaps) == [0.0, 2.5]
    with pytest.raises(ValueError):
        ArrivalSequence([2.0, 1.0])
    with pytest.raises(ValueError):
        ArrivalSequence([-1.0])
    assert ArrivalSequence.from_gaps([1.0, 2.0], start=1.0) == ArrivalSequence([1.0, 2.0, 4.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_gaps_are_exact_differences(seed, count):
    seq = gen_poisson(0.5, count, seed)
    assert seq.gaps.size == count - 1
    assert np.array_equal(seq.gaps, seq.times[1:] - seq.times[:-1])


def test_run_rng_streams_independent_of_order():
    a = run_rng(0, 5, 1).random(3)
    _ = run_rng(0, 4, 1).random(3)
    assert np.array_equal(a, run_rng(0, 5, 1).random(3))
    assert not np.array_equal(a, run_rng(0, 5, 2).random(3))
    assert not np.array_equal(a, run_rng(1, 5, 1).random(3))
