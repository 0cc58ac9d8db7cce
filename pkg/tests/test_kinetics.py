import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from emitterlab.kinetics import (
    PowerModel,
    ThreeLevelRates,
    analytic_g2,
    background_mixed_g2,
    detected_rate,
    g2_parameters,
    saturation_curve,
    saturation_parameters,
    signal_fraction_for_g2,
    steady_state,
)
from oracles import FROZEN_G2, FROZEN_G2_TAU, FROZEN_STEADY_STATE, ORACLE_RATES, ode_g2, ode_steady_state, two_level_g2

rate = st.floats(1e4, 1e9)


def test_steady_state_frozen():
    np.testing.assert_allclose(steady_state(ThreeLevelRates(*ORACLE_RATES)), FROZEN_STEADY_STATE, rtol=1e-14)


def test_g2_frozen_table():
    g = analytic_g2(ThreeLevelRates(*ORACLE_RATES), FROZEN_G2_TAU)
    np.testing.assert_allclose(g, FROZEN_G2, atol=1e-7)


def test_g2_matches_live_ode():
    tau = np.linspace(0.0, 3000.0, 61)
    np.testing.assert_allclose(analytic_g2(ThreeLevelRates(*ORACLE_RATES), tau), ode_g2(*ORACLE_RATES, tau), atol=1e-6)


@given(rate, rate, st.floats(0, 1e8), rate)
def test_steady_state_agrees_with_ode_and_sums_to_one(k12, k21, k23, k31):
    p = steady_state(ThreeLevelRates(k12, k21, k23, k31))
    assert abs(sum(p) - 1.0) < 1e-12
    assert min(p) >= 0
    np.testing.assert_allclose(p, ode_steady_state(k12, k21, k23, k31), atol=1e-9)


@given(rate, rate, st.floats(0, 1e8), rate)
def test_g2_invariants(k12, k21, k23, k31):
    r = ThreeLevelRates(k12, k21, k23, k31)
    tau = np.concatenate([[0.0], np.geomspace(1e-3, 1e7, 200)])
    g = analytic_g2(r, tau)
    assert g[0] == 0.0
    assert np.all(g >= -1e-9)
    assert abs(g[-1] - 1.0) < 1e-6
    np.testing.assert_array_equal(analytic_g2(r, -tau), g)


@given(rate, rate)
def test_two_level_closed_form(k12, k21):
    tau = np.linspace(0, 100, 101)
    np.testing.assert_allclose(analytic_g2(ThreeLevelRates(k12, k21), tau), two_level_g2(k12, k21, tau), atol=1e-10)


@given(rate, rate)
def test_no_bunching_without_shelving(k12, k21):
    tau = np.geomspace(1e-2, 1e6, 400)
    assert np.max(analytic_g2(ThreeLevelRates(k12, k21), tau)) <= 1.0 + 1e-12


@given(st.floats(1e7, 1e9), st.floats(1e7, 1e9), st.floats(0.01, 1.0), st.floats(1e-4, 1e-2))
def test_slow_shelf_bunches(k12, k21, shelf, release):
    # a shelf much slower than the optical cycle pushes g2 above one
    k23 = shelf * k21
    r = ThreeLevelRates(k12, k21, k23, release * k23)
    tau1, tau2, a = g2_parameters(r)
    assert a > 0 and tau2 > tau1
    assert np.max(analytic_g2(r, np.geomspace(tau1, 10 * tau2, 400))) > 1.0


@given(rate, rate, st.floats(1e3, 1e8), rate)
def test_g2_parameters_reproduce_curve(k12, k21, k23, k31):
    r = ThreeLevelRates(k12, k21, k23, k31)
    try:
        tau1, tau2, a = g2_parameters(r)
    except ValueError:
        assume(False)
    assume(np.isfinite(tau2) and tau2 / tau1 > 1 + 1e-6)
    t = np.linspace(0, 5 * tau2, 300)
    model = 1 - (1 + a) * np.exp(-t / tau1) + a * np.exp(-t / tau2)
    np.testing.assert_allclose(analytic_g2(r, t)[1:], model[1:], atol=1e-8)


def test_zero_pump_limit():
    r = ThreeLevelRates(0.0, 1e8, 1e6, 1e5)
    assert steady_state(r) == (1.0, 0.0, 0.0)
    tau1, tau2, a = g2_parameters(r)
    assert tau1 == pytest.approx(1 / 1.01e8 / 1e-9)
    assert a == 0.0


def test_degenerate_eigenvalues_continuous():
    # k12 + k21 + k23 = k31 with k23 tiny gives nearly repeated roots
    base = ThreeLevelRates(5e7, 5e7, 1e-3, 1e8)
    near = ThreeLevelRates(5e7, 5e7 * (1 + 1e-10), 1e-3, 1e8)
    tau = np.linspace(0, 200, 81)
    np.testing.assert_allclose(analytic_g2(base, tau), analytic_g2(near, tau), atol=1e-8)
    np.testing.assert_allclose(analytic_g2(base, tau), ode_g2(5e7, 5e7, 1e-3, 1e8, tau), atol=1e-6)


def test_complex_eigenvalues_match_ode():
    # fast shelving with slow deshelving and strong pump gives oscillating populations
    r = ThreeLevelRates(1e9, 1e7, 5e8, 5e8)
    m_tau = np.linspace(0, 50, 101)
    np.testing.assert_allclose(analytic_g2(r, m_tau), ode_g2(1e9, 1e7, 5e8, 5e8, m_tau), atol=1e-6)


def test_background_mixing_and_inverse():
    assert background_mixed_g2(0.0, 0.938) == pytest.approx(1 - 0.938**2)
    assert 1 - 0.938**2 == pytest.approx(0.12, abs=0.001)
    assert signal_fraction_for_g2(0.12) == pytest.approx(0.938, abs=1e-3)
    with pytest.raises(ValueError):
        background_mixed_g2(0.0, 1.5)


@given(rate, st.floats(1e5, 1e9), st.floats(0, 1e8), st.floats(1e4, 1e9), st.floats(1e3, 1e9))
def test_saturation_form_is_exact(k12, k21, k23, k31, sigma):
    r = ThreeLevelRates(k12, k21, k23, k31)
    pm = PowerModel(sigma, 0.1)
    i_sat, p_sat = saturation_parameters(r, pm)
    p = k12 / sigma
    assert detected_rate(r, pm) == pytest.approx(saturation_curve(p, i_sat, p_sat), rel=1e-9)


def test_saturation_limits():
    r = ThreeLevelRates(0, 1e8, 5e6, 2e7)
    pm = PowerModel(1e7, 0.1)
    i_sat, p_sat = saturation_parameters(r, pm)
    assert i_sat == pytest.approx(0.1 * 1e8 * 2e7 / (5e6 + 2e7))
    assert saturation_curve(p_sat, i_sat, p_sat) == pytest.approx(i_sat / 2)
    assert saturation_curve(1e9, i_sat, p_sat) == pytest.approx(i_sat, rel=1e-6)


@pytest.mark.parametrize("kw", [dict(k12=-1, k21=1), dict(k12=1, k21=0), dict(k12=1, k21=1, k23=1, k31=0),
                                dict(k12=np.nan, k21=1)])
def test_rates_validation(kw):
    with pytest.raises(ValueError):
        ThreeLevelRates(**kw)
