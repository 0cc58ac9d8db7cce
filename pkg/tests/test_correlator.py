import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emitterlab.correlator import (
    bin_index,
    correlate,
    correlate_brute_force,
    fit_g2,
    histogram_single_emitter_test,
    single_emitter_test,
)
from emitterlab.fitting import get_model
from emitterlab.kinetics import PowerModel, ThreeLevelRates
from emitterlab.photon_stream import StreamConfig, simulate_stream
from oracles import pair_delays_histogram


def _random_pair(rng, n_max=2000, span=200_000):
    na, nb = rng.integers(0, n_max // 2 + 1, size=2)
    a = np.sort(rng.integers(0, span, size=na))
    b = np.sort(rng.integers(0, span, size=nb))
    return a, b


def test_windowed_equals_brute_force_200_cases():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a, b = _random_pair(rng)
        bw = int(rng.choice([1, 7, 100, 1000]))
        rng_ps = int(rng.integers(1, 30)) * bw
        fast = correlate(a, b, bw, rng_ps)
        slow = correlate_brute_force(a, b, bw, rng_ps)
        np.testing.assert_array_equal(fast.raw, slow.raw)


@settings(max_examples=40)
@given(st.lists(st.integers(0, 5000), max_size=60), st.lists(st.integers(0, 5000), max_size=60),
       st.integers(1, 500), st.integers(0, 10))
def test_matches_pure_python_oracle(a, b, bw, nbins):
    a, b = np.sort(a), np.sort(b)
    h = correlate(a, b, bw, nbins * bw)
    np.testing.assert_array_equal(h.raw, pair_delays_histogram(a.tolist(), b.tolist(), bw, -nbins, nbins))


def test_edges_go_away_from_zero():
    np.testing.assert_array_equal(bin_index(np.array([-150, -50, 0, 49, 50, 150]), 100), [-2, -1, 0, 0, 1, 2])


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.integers(0, 10**9))
def test_time_translation_invariance(seed, shift):
    a, b = _random_pair(np.random.default_rng(seed), 400)
    h0 = correlate(a, b, 50, 5000)
    h1 = correlate(a + shift, b + shift, 50, 5000)
    np.testing.assert_array_equal(h0.raw, h1.raw)


@settings(max_examples=30)
@given(st.integers(0, 2**32))
def test_channel_swap_mirrors_histogram(seed):
    a, b = _random_pair(np.random.default_rng(seed), 400)
    np.testing.assert_array_equal(correlate(a, b, 50, 5000).raw, correlate(b, a, 50, 5000).raw[::-1])


def test_empty_input_is_flagged():
    h = correlate(np.array([], np.int64), np.array([1, 2, 3]), 10, 100)
    assert not h.valid
    assert np.all(h.g2 == 0) and np.all(h.g2_err == 0)
    assert h.rates == (0.0, 0.0)
    with pytest.raises(ValueError):
        fit_g2(h)
    assert histogram_single_emitter_test(h).indeterminate


def test_uncorrelated_streams_normalise_to_one():
    rng = np.random.default_rng(1)
    a = np.sort(rng.integers(0, 10**10, 50_000))
    b = np.sort(rng.integers(0, 10**10, 50_000))
    h = correlate(a, b, 10_000, 1_000_000, total_time=1e-2)
    assert abs(h.g2.mean() - 1) < 0.01


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        correlate(np.arange(3), np.arange(3), 0, 10)
    with pytest.raises(ValueError):
        correlate(np.arange(3), np.arange(3), 10, (10, -10))


@pytest.mark.slow
def test_throughput_ten_million_tags():
    rng = np.random.default_rng(0)
    n = 5_000_000
    span = 10**12
    a = np.sort(rng.integers(0, span, n))
    b = np.sort(rng.integers(0, span, n))
    t0 = time.perf_counter()
    h = correlate(a, b, 1000, 500_000)
    assert time.perf_counter() - t0 <= 10.0
    assert h.raw.sum() > 0


def _noiseless_hist(rho=0.938, tau1=4.0, tau2=40.0, a=0.3):
    from emitterlab.correlator import CorrelationHistogram

    k = np.arange(-200, 201)
    x = k * 1.0
    g = get_model("g2_three_level")(x, [tau1, tau2, a, rho], bin_width=1.0)
    raw = np.rint(g * 1e6).astype(np.int64)
    ra = rb = 1e5
    t = 1e6 / (ra * rb * 1e-9)
    return CorrelationHistogram(1000, -200, 200, raw, raw / 1e6, (ra, rb), t)


def test_fit_recovers_g2_zero():
    fit = fit_g2(_noiseless_hist())
    assert fit.status == "converged"
    assert fit.g2_zero == pytest.approx(1 - 0.938**2, abs=2e-3)
    assert fit.tau1 == pytest.approx(4.0, rel=0.02)
    assert fit.max_g2() > 1.0


@pytest.mark.parametrize("g0,err,expected", [(0.12, 0.03, True), (0.45, 0.03, False), (0.6, 0.01, False),
                                             (0.2, np.nan, None)])
def test_single_emitter_verdicts(g0, err, expected):
    assert single_emitter_test(g0, err).single is expected


def test_two_independent_emitters_give_half():
    rates = ThreeLevelRates(5e7, 1e8)
    streams = [simulate_stream(StreamConfig(rates, PowerModel(1e7, 0.1), 0.02, seed=s)) for s in (1, 2)]
    t = np.concatenate([s.t for s in streams])
    ch = np.concatenate([s.channel for s in streams])
    order = np.lexsort((ch, t))
    t, ch = t[order], ch[order]
    h = correlate(t[ch == 0], t[ch == 1], 500, 20_000, total_time=0.02)
    g0, err = h.central_bin()
    assert g0 == pytest.approx(0.5, abs=max(4 * err, 0.05))
